// dykaf/experiments.cpp

#include "dykaf/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "dykaf/kron_approx.hpp"
#include "dykaf/rng.hpp"

namespace dykaf {

namespace {

std::uint64_t mix_seed(long seed, long salt) {
  std::uint64_t x = static_cast<std::uint64_t>(seed) * 1000003u +
                    static_cast<std::uint64_t>(salt) * 7919u + 0x9e3779b9u;
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  return x;
}

DenseMatrix random_normal(Rng& rng, std::size_t m, std::size_t n) {
  DenseMatrix a(m, n);
  for (double& x : a.data()) x = rng.normal();
  return a;
}

DenseMatrix random_symmetric(Rng& rng, std::size_t n) {
  return symmetrize(random_normal(rng, n, n));
}

DenseMatrix random_spd(Rng& rng, std::size_t n) {
  DenseMatrix b = random_normal(rng, n, n);
  DenseMatrix a = matmul(b, transpose(b));
  for (std::size_t i = 0; i < n; ++i) a(i, i) += 1e-3;
  return a;
}

// Shortest round-trip decimal representation.
std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, end);
}

double parse_double_str(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw Error("bad value for " + key + ": '" + value + "'");
  }
}

long parse_long_str(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long v = std::stol(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw Error("bad value for " + key + ": '" + value + "'");
  }
}

std::size_t parse_size_str(const std::string& key, const std::string& value) {
  const long v = parse_long_str(key, value);
  if (v <= 0) throw Error("value for " + key + " must be positive");
  return static_cast<std::size_t>(v);
}

bool parse_bool_str(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw Error("bad value for " + key + ": '" + value + "' (want true/false)");
}

std::vector<long> parse_grid_str(const std::string& key,
                                 const std::string& value) {
  std::vector<long> out;
  std::stringstream ss(value);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(parse_long_str(key, tok));
  }
  if (out.empty()) throw Error("empty grid for " + key);
  return out;
}

// The dense-oracle experiments refuse to run when the rearrangement
// identity R(B (x) C) = vec(B) vec(C)^T is broken.
void assert_rearrange_identity() {
  Rng rng(0xDA7A);
  DenseMatrix b = random_normal(rng, 3, 3);
  DenseMatrix c = random_normal(rng, 2, 2);
  DenseMatrix r = rearrange(kron(b, c), 3, 3, 2, 2);
  auto vb = vec(b);
  auto vc = vec(c);
  for (std::size_t p = 0; p < vb.size(); ++p) {
    for (std::size_t q = 0; q < vc.size(); ++q) {
      if (r(p, q) != vb[p] * vc[q]) {
        throw Error("rearrange rank-1 identity violated; aborting experiment");
      }
    }
  }
}

double best_scale_residual(const DenseMatrix& f, const DenseMatrix& k) {
  const double kn = frobenius_norm(k);
  if (kn < kNormFloor) return frobenius_norm(f);
  const double proj = frobenius_inner(f, k) / kn;
  const double fn = frobenius_norm(f);
  return std::sqrt(std::max(0.0, fn * fn - proj * proj));
}

}  // namespace

ExperimentConfig default_config(const std::string& experiment) {
  ExperimentConfig cfg;
  cfg.experiment = experiment;
  if (experiment == "fisher-sim") {
    cfg.output = "fisher_sim.csv";
  } else if (experiment == "hessian-gap") {
    cfg.output = "hessian_gap.csv";
    cfg.num_seeds = 3;
    cfg.hp.learning_rate = 0.05;
  } else if (experiment == "props") {
    cfg.output = "props.csv";
  } else if (experiment == "train") {
    cfg.output = "train.csv";
    cfg.hp.learning_rate = 0.05;
  } else if (experiment == "selftest") {
    cfg.output = "";
  } else {
    throw Error("unknown experiment '" + experiment + "'");
  }
  return cfg;
}

void apply_override(ExperimentConfig& cfg, const std::string& key,
                    const std::string& value) {
  if (key == "seed") {
    cfg.seed = parse_long_str(key, value);
  } else if (key == "num_seeds") {
    cfg.num_seeds = parse_long_str(key, value);
    if (cfg.num_seeds < 1) throw Error("num_seeds must be >= 1");
  } else if (key == "jobs") {
    cfg.jobs = parse_long_str(key, value);
    if (cfg.jobs < 1) throw Error("jobs must be >= 1");
  } else if (key == "m") {
    cfg.m = parse_size_str(key, value);
  } else if (key == "n") {
    cfg.n = parse_size_str(key, value);
  } else if (key == "steps") {
    cfg.steps = parse_long_str(key, value);
    if (cfg.steps < 1) throw Error("steps must be >= 1");
  } else if (key == "ema_beta") {
    cfg.ema_beta = parse_double_str(key, value);
  } else if (key == "unnormalized_ema") {
    cfg.unnormalized_ema = parse_bool_str(key, value);
  } else if (key == "learning_rate") {
    cfg.hp.learning_rate = parse_double_str(key, value);
  } else if (key == "beta1") {
    cfg.hp.beta1 = parse_double_str(key, value);
  } else if (key == "beta2") {
    cfg.hp.beta2 = parse_double_str(key, value);
  } else if (key == "epsilon") {
    cfg.hp.epsilon = parse_double_str(key, value);
  } else if (key == "precond_frequency") {
    cfg.hp.precond_frequency = parse_long_str(key, value);
  } else if (key == "rank1_second_moment") {
    cfg.hp.rank1_second_moment = parse_bool_str(key, value);
  } else if (key == "weight_decay") {
    cfg.hp.weight_decay = parse_double_str(key, value);
  } else if (key == "bias_correction") {
    cfg.hp.bias_correction = parse_bool_str(key, value);
  } else if (key == "shampoo_matrix_eps") {
    cfg.hp.shampoo_matrix_eps = parse_double_str(key, value);
  } else if (key == "factor_beta") {
    if (value == "none") {
      cfg.hp.factor_beta.reset();
    } else {
      cfg.hp.factor_beta = parse_double_str(key, value);
    }
  } else if (key == "second_moment_decay") {
    if (value == "none") {
      cfg.hp.second_moment_decay.reset();
    } else {
      cfg.hp.second_moment_decay = parse_double_str(key, value);
    }
  } else if (key == "shampoo_factor_beta") {
    cfg.hp.shampoo_factor_beta = parse_double_str(key, value);
  } else if (key == "dataset_path") {
    cfg.dataset_path = value;
  } else if (key == "allow_synth_fallback") {
    cfg.allow_synth_fallback = parse_bool_str(key, value);
  } else if (key == "synth_classes") {
    cfg.synth_classes = parse_size_str(key, value);
  } else if (key == "synth_dim") {
    cfg.synth_dim = parse_size_str(key, value);
  } else if (key == "synth_count") {
    cfg.synth_count = parse_size_str(key, value);
  } else if (key == "sample_grid") {
    cfg.sample_grid = parse_grid_str(key, value);
  } else if (key == "train_steps") {
    cfg.train_steps = parse_long_str(key, value);
    if (cfg.train_steps < 1) throw Error("train_steps must be >= 1");
  } else if (key == "eval_every") {
    cfg.eval_every = parse_long_str(key, value);
    if (cfg.eval_every < 1) throw Error("eval_every must be >= 1");
  } else if (key == "optimizer") {
    if (value != "dykaf" && value != "soap" && value != "shampoo" &&
        value != "adamw") {
      throw Error("bad value for optimizer: '" + value + "'");
    }
    cfg.optimizer = value;
  } else if (key == "output") {
    cfg.output = value;
  } else if (key == "format") {
    if (value != "csv" && value != "json") {
      throw Error("bad value for format: '" + value + "' (want csv|json)");
    }
    cfg.format = value;
  } else if (key == "experiment") {
    throw Error("key 'experiment' is fixed by the subcommand");
  } else {
    throw Error("unknown config key '" + key + "'");
  }
}

void apply_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw Error("config " + path + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    std::string as_string;
    if (value.is_string()) {
      as_string = value.get<std::string>();
    } else if (value.is_array()) {
      std::string acc;
      for (const auto& item : value) {
        if (!acc.empty()) acc += ',';
        acc += item.dump();
      }
      as_string = acc;
    } else {
      as_string = value.dump();
    }
    apply_override(cfg, key, as_string);
  }
}

void sort_records(std::vector<ExperimentRecord>& records) {
  std::stable_sort(records.begin(), records.end(),
                   [](const ExperimentRecord& a, const ExperimentRecord& b) {
                     if (a.experiment != b.experiment) {
                       return a.experiment < b.experiment;
                     }
                     if (a.method != b.method) return a.method < b.method;
                     if (a.x != b.x) return a.x < b.x;
                     if (a.metric != b.metric) return a.metric < b.metric;
                     return a.seed < b.seed;
                   });
}

void emit(std::vector<ExperimentRecord> records, const std::string& path,
          const std::string& format) {
  sort_records(records);
  std::ofstream out(path);
  if (!out) throw Error("emit: cannot open " + path);

  auto check_field = [](const std::string& s) {
    if (s.find(',') != std::string::npos || s.find('\n') != std::string::npos) {
      throw Error("emit: field contains a delimiter: '" + s + "'");
    }
  };

  if (format == "csv") {
    out << "experiment,seed,method,metric,x,value\n";
    for (const auto& r : records) {
      check_field(r.experiment);
      check_field(r.method);
      check_field(r.metric);
      out << r.experiment << ',' << r.seed << ',' << r.method << ','
          << r.metric << ',' << r.x << ',' << format_double(r.value) << '\n';
    }
  } else if (format == "json") {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : records) {
      arr.push_back({{"experiment", r.experiment},
                     {"seed", r.seed},
                     {"method", r.method},
                     {"metric", r.metric},
                     {"x", r.x},
                     {"value", r.value}});
    }
    out << arr.dump(2) << '\n';
  } else {
    throw Error("emit: unknown format '" + format + "'");
  }
  if (!out) throw Error("emit: write failed for " + path);
}

// ---- fisher-sim -------------------------------------------------------------

namespace {

std::vector<ExperimentRecord> fisher_sim_single_seed(
    const ExperimentConfig& cfg, long seed) {
  const std::size_t m = cfg.m, n = cfg.n;
  const std::size_t mn = m * n;
  if (mn * mn > (std::size_t{1} << 22)) {
    throw SizeCapExceeded("fisher-sim: mn too large for the dense oracle");
  }
  const double beta = cfg.ema_beta;
  const double g_coef = cfg.unnormalized_ema ? 1.0 : (1.0 - beta);

  Rng rng(mix_seed(seed, 1));
  std::vector<ExperimentRecord> records;
  auto push = [&](const char* method, const char* metric, long x, double v) {
    records.push_back({cfg.experiment, seed, method, metric, x, v});
  };

  DenseMatrix fisher(mn, mn);
  KroneckerFactorPair dykaf;  // set at t == 1
  KroneckerFactorPair sham{
      scale(DenseMatrix::identity(m), cfg.hp.shampoo_matrix_eps),
      scale(DenseMatrix::identity(n), cfg.hp.shampoo_matrix_eps)};
  std::vector<double> nkp_warm;

  for (long t = 1; t <= cfg.steps; ++t) {
    DenseMatrix g = random_normal(rng, m, n);
    const auto vg = vec(g);
    for (std::size_t i = 0; i < mn; ++i) {
      const double gi = g_coef * vg[i];
      double* row = fisher.data().data() + i * mn;
      for (std::size_t j = 0; j < mn; ++j) {
        row[j] = beta * row[j] + gi * vg[j];
      }
    }

    if (t == 1) {
      dykaf = init_from_gradient(scale(g, std::sqrt(g_coef)));
    } else {
      dykaf = kron_proj_split({scale(dykaf.l, std::sqrt(beta)),
                               scale(dykaf.r, std::sqrt(beta))},
                              scale(g, std::sqrt(g_coef)));
    }
    sham.l = add(scale(sham.l, beta), scale(matmul(g, transpose(g)), g_coef));
    sham.r = add(scale(sham.r, beta), scale(matmul(transpose(g), g), g_coef));

    NkpResult oracle = nkp_best(fisher, m, n, 5000, 1e-12,
                                nkp_warm.empty() ? nullptr : &nkp_warm);
    nkp_warm = vec(oracle.pair.l);
    {
      const double nw = vector_norm(nkp_warm);
      if (nw > 0.0) {
        for (double& x : nkp_warm) x /= nw;
      }
    }

    const DenseMatrix k_dykaf = kron(dykaf.l, dykaf.r);
    const DenseMatrix k_sham = shampoo_estimate(sham);
    const DenseMatrix k_sham_raw = kron(sham.l, sham.r);
    const DenseMatrix k_nkp = kron(oracle.pair.l, oracle.pair.r);

    push("dykaf", "fro_error", t, frobenius_norm(sub(fisher, k_dykaf)));
    push("shampoo", "fro_error", t, frobenius_norm(sub(fisher, k_sham)));
    push("shampoo_raw", "fro_error", t,
         frobenius_norm(sub(fisher, k_sham_raw)));
    push("nkp", "fro_error", t, frobenius_norm(sub(fisher, k_nkp)));

    push("dykaf", "scaled_error", t, best_scale_residual(fisher, k_dykaf));
    push("shampoo", "scaled_error", t, best_scale_residual(fisher, k_sham));
    push("shampoo_raw", "scaled_error", t,
         best_scale_residual(fisher, k_sham_raw));
    push("nkp", "scaled_error", t, best_scale_residual(fisher, k_nkp));
  }
  return records;
}

}  // namespace

std::vector<ExperimentRecord> run_fisher_sim(const ExperimentConfig& cfg) {
  assert_rearrange_identity();
  std::vector<std::vector<ExperimentRecord>> per_seed(
      static_cast<std::size_t>(cfg.num_seeds));

  if (cfg.jobs <= 1 || cfg.num_seeds <= 1) {
    for (long i = 0; i < cfg.num_seeds; ++i) {
      per_seed[static_cast<std::size_t>(i)] =
          fisher_sim_single_seed(cfg, cfg.seed + i);
    }
  } else {
    std::vector<std::thread> pool;
    std::atomic<long> next{0};
    const long jobs = std::min<long>(cfg.jobs, cfg.num_seeds);
    for (long w = 0; w < jobs; ++w) {
      pool.emplace_back([&]() {
        for (long i = next.fetch_add(1); i < cfg.num_seeds;
             i = next.fetch_add(1)) {
          per_seed[static_cast<std::size_t>(i)] =
              fisher_sim_single_seed(cfg, cfg.seed + i);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  std::vector<ExperimentRecord> all;
  for (auto& chunk : per_seed) {
    all.insert(all.end(), chunk.begin(), chunk.end());
  }
  return all;
}

// ---- dataset plumbing ---------------------------------------------------------

std::string resolve_dataset_path(const std::string& path) {
  namespace fs = std::filesystem;
  if (path.empty() || fs::exists(path)) return path;
  if (const char* root = std::getenv("DYKAF_DATA_DIR")) {
    const fs::path joined = fs::path(root) / path;
    if (fs::exists(joined)) return joined.string();
  }
  return path;
}

Dataset subsample(const Dataset& ds, std::size_t take, std::uint64_t seed) {
  const std::size_t total = ds.count();
  take = std::min(take, total);
  std::vector<std::size_t> idx(total);
  for (std::size_t i = 0; i < total; ++i) idx[i] = i;
  Rng rng(seed);
  for (std::size_t i = total; i > 1; --i) {
    std::swap(idx[i - 1], idx[rng.below(i)]);
  }

  Dataset out;
  out.classes = ds.classes;
  out.x = DenseMatrix(take, ds.features());
  out.y.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    for (std::size_t j = 0; j < ds.features(); ++j) {
      out.x(i, j) = ds.x(idx[i], j);
    }
    out.y.push_back(ds.y[idx[i]]);
  }
  return out;
}

// ---- hessian-gap --------------------------------------------------------------

namespace {

struct LoadedDataset {
  Dataset ds;
  bool synth_fallback = false;
};

LoadedDataset load_dataset(const ExperimentConfig& cfg) {
  if (!cfg.dataset_path.empty()) {
    const std::string resolved = resolve_dataset_path(cfg.dataset_path);
    try {
      return {read_libsvm(resolved), false};
    } catch (const Error& e) {
      if (!cfg.allow_synth_fallback) {
        throw DatasetUnavailable(std::string(e.what()) +
                                 " (synth fallback disabled)");
      }
    }
  }
  return {synth_blobs(cfg.synth_classes, cfg.synth_dim, cfg.synth_count,
                      mix_seed(cfg.seed, 7)),
          !cfg.dataset_path.empty()};
}

// Finite-difference check of the analytic Hessian along random directions;
// returns the worst relative error.
double hessian_fd_guard(const Dataset& ds, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t m = ds.classes, n = ds.features();
  SoftmaxModel model{scale(random_normal(rng, m, n), 0.1)};
  DenseMatrix h = hessian(model, ds);

  double worst = 0.0;
  const double step = 1e-5;
  for (int rep = 0; rep < 3; ++rep) {
    DenseMatrix dir = random_normal(rng, m, n);
    dir = scale(dir, 1.0 / frobenius_norm(dir));
    SoftmaxModel up = model, dn = model;
    up.w = add(up.w, scale(dir, step));
    dn.w = sub(dn.w, scale(dir, step));
    DenseMatrix fd =
        scale(sub(gradient(up, ds), gradient(dn, ds)), 1.0 / (2.0 * step));
    DenseMatrix hv = mat(matmul(h, mat(vec(dir), m * n, 1)).data(), m, n);
    const double denom = std::max(frobenius_norm(fd), 1e-300);
    worst = std::max(worst, frobenius_norm(sub(hv, fd)) / denom);
  }
  return worst;
}

struct TrainedRun {
  SoftmaxModel model;
  DenseMatrix fisher_estimate;
  double final_loss = 0.0;
};

TrainedRun train_for_gap(const Dataset& ds, const Hyperparams& hp, long steps,
                         const std::string& method) {
  const std::size_t m = ds.classes, n = ds.features();
  TrainedRun out;
  out.model.w = DenseMatrix(m, n);

  if (method == "dykaf") {
    DyKafParamState st = dykaf_init(gradient(out.model, ds), hp);
    for (long t = 0; t < steps; ++t) {
      auto res = dykaf_step(st, out.model.w, gradient(out.model, ds), hp);
      st = res.state;
      out.model.w = res.w;
    }
    out.fisher_estimate = fisher_reconstruct(st);
  } else if (method == "soap") {
    SoapState st = soap_init(m, n, hp);
    for (long t = 0; t < steps; ++t) {
      auto res = soap_step(st, out.model.w, gradient(out.model, ds), hp);
      st = res.state;
      out.model.w = res.w;
    }
    out.fisher_estimate = fisher_reconstruct(st);
  } else {
    throw Error("hessian-gap: unsupported method '" + method + "'");
  }
  out.final_loss = loss(out.model, ds);
  return out;
}

}  // namespace

std::vector<ExperimentRecord> run_hessian_gap(const ExperimentConfig& cfg) {
  assert_rearrange_identity();
  LoadedDataset loaded = load_dataset(cfg);
  const Dataset& full = loaded.ds;
  if (full.classes * full.features() > kHessianDimCap) {
    throw SizeCapExceeded("hessian-gap: mn exceeds the dense cap");
  }

  std::vector<ExperimentRecord> records;
  auto push = [&](long seed, const std::string& method, const char* metric,
                  long x, double v) {
    records.push_back({cfg.experiment, seed, method, metric, x, v});
  };

  if (loaded.synth_fallback) {
    push(cfg.seed, "harness", "synth_fallback", 0, 1.0);
  }

  // Guard: the analytic Hessian must agree with finite differences before
  // any gap is reported.
  {
    Dataset guard_ds = subsample(full, std::min<std::size_t>(full.count(), 64),
                                 mix_seed(cfg.seed, 11));
    const double err = hessian_fd_guard(guard_ds, mix_seed(cfg.seed, 13));
    if (err > 1e-6) {
      throw Error("hessian-gap: finite-difference guard failed, rel err " +
                  format_double(err));
    }
    push(cfg.seed, "harness", "fd_guard_rel_err", 0, err);
  }

  for (long s = 0; s < cfg.num_seeds; ++s) {
    const long seed = cfg.seed + s;
    for (long want : cfg.sample_grid) {
      Dataset subset = subsample(full, static_cast<std::size_t>(want),
                                 mix_seed(seed, want));
      for (const char* method : {"soap", "dykaf"}) {
        TrainedRun run = train_for_gap(subset, cfg.hp, cfg.train_steps, method);
        DenseMatrix h = hessian(run.model, subset);
        push(seed, method, "hessian_gap", want,
             frobenius_norm(sub(h, run.fisher_estimate)));
        push(seed, method, "hessian_gap_scaled", want,
             best_scale_residual(h, run.fisher_estimate));
        push(seed, method, "final_loss", want, run.final_loss);
      }
    }
  }
  return records;
}

// ---- train --------------------------------------------------------------------

std::vector<ExperimentRecord> run_train(const ExperimentConfig& cfg) {
  LoadedDataset loaded = load_dataset(cfg);
  const Dataset& ds = loaded.ds;
  const std::size_t m = ds.classes, n = ds.features();

  std::vector<ExperimentRecord> records;
  auto push = [&](const char* metric, long x, double v) {
    records.push_back({cfg.experiment, cfg.seed, cfg.optimizer, metric, x, v});
  };
  if (loaded.synth_fallback) push("synth_fallback", 0, 1.0);

  SoftmaxModel model{DenseMatrix(m, n)};
  const Hyperparams& hp = cfg.hp;

  DyKafParamState dykaf_st;
  SoapState soap_st;
  ShampooState sham_st;
  AdamWState adamw_st;
  if (cfg.optimizer == "dykaf") {
    dykaf_st = dykaf_init(gradient(model, ds), hp);
  } else if (cfg.optimizer == "soap") {
    soap_st = soap_init(m, n, hp);
  } else if (cfg.optimizer == "shampoo") {
    sham_st = shampoo_init(m, n, hp);
  } else {
    adamw_st = adamw_init(m, n);
  }

  push("loss", 0, loss(model, ds));
  for (long t = 1; t <= cfg.train_steps; ++t) {
    DenseMatrix g = gradient(model, ds);
    if (cfg.optimizer == "dykaf") {
      auto res = dykaf_step(dykaf_st, model.w, g, hp);
      dykaf_st = res.state;
      model.w = res.w;
    } else if (cfg.optimizer == "soap") {
      auto res = soap_step(soap_st, model.w, g, hp);
      soap_st = res.state;
      model.w = res.w;
    } else if (cfg.optimizer == "shampoo") {
      auto res = shampoo_step(sham_st, model.w, g, hp);
      sham_st = res.state;
      model.w = res.w;
    } else {
      auto res = adamw_step(adamw_st, model.w, g, hp);
      adamw_st = res.state;
      model.w = res.w;
    }
    if (t % cfg.eval_every == 0 || t == cfg.train_steps) {
      push("loss", t, loss(model, ds));
    }
  }
  push("train_accuracy", cfg.train_steps, accuracy(model, ds));
  return records;
}

// ---- proposition validators ------------------------------------------------------

ValidatorReport validate_equivalence(long seed, int instances) {
  Rng rng(mix_seed(seed, 21));
  ValidatorReport rep;
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    const std::size_t m = 2 + rng.below(5);  // 2..6
    const std::size_t n = 2 + rng.below(5);
    DenseMatrix l = random_spd(rng, m);
    DenseMatrix r = random_spd(rng, n);
    DenseMatrix g = random_normal(rng, m, n);

    KroneckerFactorPair fast = kron_proj_split({l, r}, g);

    Rank1Factorization state;
    state.u = vec(l);
    state.v = vec(r);
    const double ln = vector_norm(state.u), rn = vector_norm(state.v);
    for (double& x : state.u) x /= ln;
    for (double& x : state.v) x /= rn;
    state.s = ln * rn;
    Rank1Factorization out = proj_split_step(state, kron(g, g));

    // Compare products in rearranged coordinates (isometric).
    const auto vl = vec(fast.l);
    const auto vr = vec(fast.r);
    double num = 0.0, den = 0.0;
    for (std::size_t p = 0; p < vl.size(); ++p) {
      for (std::size_t q = 0; q < vr.size(); ++q) {
        const double ref = out.u[p] * out.s * out.v[q];
        const double d = vl[p] * vr[q] - ref;
        num += d * d;
        den += ref * ref;
      }
    }
    worst = std::max(worst, std::sqrt(num) / std::max(std::sqrt(den), 1e-300));
  }
  rep.pass = worst <= 1e-10;
  rep.records.push_back({"props", seed, "equivalence", "max_rel_dev", 0, worst});
  rep.records.push_back(
      {"props", seed, "equivalence", "pass", 0, rep.pass ? 1.0 : 0.0});
  return rep;
}

ValidatorReport validate_init_optimality(long seed, int instances) {
  Rng rng(mix_seed(seed, 22));
  ValidatorReport rep;
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    const std::size_t m = 2 + rng.below(7);  // 2..8
    const std::size_t n = 2 + rng.below(5);  // 2..6
    DenseMatrix g = random_normal(rng, m, n);
    KroneckerFactorPair init = init_from_gradient(g);

    const auto vg = vec(g);
    DenseMatrix f(m * n, m * n);
    for (std::size_t p = 0; p < m * n; ++p) {
      for (std::size_t q = 0; q < m * n; ++q) f(p, q) = vg[p] * vg[q];
    }
    NkpResult oracle = nkp_best(f, m, n);
    const double resid = frobenius_norm(sub(f, kron(init.l, init.r)));
    const double dev = std::abs(resid - oracle.residual) /
                       std::max(oracle.residual, 1e-12 * frobenius_norm(f));
    worst = std::max(worst, dev);
  }
  rep.pass = worst <= 1e-9;
  rep.records.push_back({"props", seed, "init", "max_rel_dev", 0, worst});
  rep.records.push_back({"props", seed, "init", "pass", 0, rep.pass ? 1.0 : 0.0});
  return rep;
}

ValidatorReport validate_dynamical(long seed, int instances_per_cell) {
  Rng rng(mix_seed(seed, 23));
  ValidatorReport rep;
  bool pass = true;
  long cell = 0;
  double worst_e0_resid = 0.0;

  // Unit-norm symmetric matrix orthogonal to `ref` in the Frobenius sense.
  auto orthogonal_unit = [&rng](const DenseMatrix& ref) {
    DenseMatrix z = random_symmetric(rng, ref.rows());
    const double proj = frobenius_inner(z, ref);
    z = sub(z, scale(ref, proj));  // ref has unit norm
    return scale(z, 1.0 / frobenius_norm(z));
  };

  for (double c : {0.5, 0.9}) {
    for (double eps : {0.0, 1e-3, 1e-4}) {
      double worst_excess = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < instances_per_cell; ++i) {
        const std::size_t m = 3 + rng.below(2);  // 3..4
        const std::size_t n = 3 + rng.below(2);
        DenseMatrix a0 = random_symmetric(rng, m);
        a0 = scale(a0, 1.0 / frobenius_norm(a0));
        DenseMatrix b0 = random_symmetric(rng, n);
        b0 = scale(b0, 1.0 / frobenius_norm(b0));

        // cos(A0, A1) = cos(B0, B1) = sqrt(c), so the Kronecker overlap is
        // exactly c.
        const double root_c = std::sqrt(c);
        DenseMatrix a1 = add(scale(a0, root_c),
                             scale(orthogonal_unit(a0), std::sqrt(1.0 - c)));
        DenseMatrix b1 = add(scale(b0, root_c),
                             scale(orthogonal_unit(b0), std::sqrt(1.0 - c)));

        // Rearranged targets: R(A (x) B) = vec(A) vec(B)^T, unit scale.
        const auto va0 = vec(a0), vb0 = vec(b0), va1 = vec(a1), vb1 = vec(b1);
        DenseMatrix r0(m * m, n * n), r1(m * m, n * n), target(m * m, n * n);
        for (std::size_t p = 0; p < m * m; ++p) {
          for (std::size_t q = 0; q < n * n; ++q) {
            r0(p, q) = va0[p] * vb0[q];
            r1(p, q) = va1[p] * vb1[q];
            target(p, q) = r1(p, q);
          }
        }
        double e0n = 0.0, e1n = 0.0;
        if (eps > 0.0) {
          DenseMatrix e0 = random_normal(rng, m * m, n * n);
          e0 = scale(e0, 0.9 * eps / frobenius_norm(e0));
          DenseMatrix e1 = random_normal(rng, m * m, n * n);
          e1 = scale(e1, 0.9 * eps / frobenius_norm(e1));
          r0 = add(r0, e0);
          r1 = add(r1, e1);
          e0n = frobenius_norm(e0);
          e1n = frobenius_norm(e1);
        }

        Rank1Factorization state{va0, vb0, 1.0};
        Rank1Factorization out = proj_split_step(state, sub(r1, r0));

        double err = 0.0;
        for (std::size_t p = 0; p < m * m; ++p) {
          for (std::size_t q = 0; q < n * n; ++q) {
            const double d = out.u[p] * out.s * out.v[q] - target(p, q);
            err += d * d;
          }
        }
        err = std::sqrt(err);

        if (eps == 0.0) {
          worst_e0_resid = std::max(worst_e0_resid, err);
          if (err > 1e-9) pass = false;
        } else {
          const double bound = (1.0 + 2.0 / c) * (e0n + e1n) +
                               kDynamicalCurvatureConstant * eps * eps;
          worst_excess = std::max(worst_excess, err - bound);
          // Raw remainder beyond the first-order term, for K calibration.
          const double remainder =
              (err - (1.0 + 2.0 / c) * (e0n + e1n)) / (eps * eps);
          rep.records.push_back({"props", seed, "dynamical",
                                 "remainder_over_eps2", cell * 1000 + i,
                                 remainder});
          if (err > bound) pass = false;
        }
      }
      if (eps > 0.0) {
        rep.records.push_back({"props", seed, "dynamical", "worst_excess",
                               cell, worst_excess});
      }
      ++cell;
    }
  }
  rep.records.push_back(
      {"props", seed, "dynamical", "eps0_max_resid", 0, worst_e0_resid});
  rep.pass = pass;
  rep.records.push_back(
      {"props", seed, "dynamical", "pass", 0, pass ? 1.0 : 0.0});
  return rep;
}

ValidatorReport validate_coherence(long seed, int streams) {
  Rng rng(mix_seed(seed, 24));
  ValidatorReport rep;
  bool pass = true;
  double worst_identity = 0.0, worst_violation = 0.0;

  for (int rep_i = 0; rep_i < streams; ++rep_i) {
    const std::size_t m = 2 + rng.below(7);  // 2..8
    const std::size_t n = 2 + rng.below(7);
    const int t = 2 + static_cast<int>(rng.below(9));  // 2..10

    DenseMatrix l(m, m), r(n, n), fisher(m * n, m * n);
    std::vector<std::vector<double>> gs;
    double sum_sq = 0.0;
    for (int i = 0; i < t; ++i) {
      DenseMatrix g = random_normal(rng, m, n);
      l = add(l, matmul(g, transpose(g)));
      r = add(r, matmul(transpose(g), g));
      const auto vg = vec(g);
      for (std::size_t p = 0; p < m * n; ++p) {
        for (std::size_t q = 0; q < m * n; ++q) fisher(p, q) += vg[p] * vg[q];
      }
      sum_sq += frobenius_norm(g) * frobenius_norm(g);
      gs.push_back(vg);
    }

    DenseMatrix est = shampoo_estimate({l, r});
    const double lhs = frobenius_norm(est) * frobenius_norm(est);
    const double identity_dev =
        std::abs(lhs - sum_sq * sum_sq) / (sum_sq * sum_sq);
    worst_identity = std::max(worst_identity, identity_dev);
    if (identity_dev > 1e-9) pass = false;

    double mu = 0.0, cross = 0.0;
    for (int i = 0; i < t; ++i) {
      for (int j = 0; j < t; ++j) {
        if (i == j) continue;
        const double ni = vector_norm(gs[i]), nj = vector_norm(gs[j]);
        mu = std::max(mu, std::abs(dot(gs[i], gs[j])) / (ni * nj));
        cross += ni * ni * nj * nj;
      }
    }
    const double fn2 = frobenius_norm(fisher) * frobenius_norm(fisher);
    const double rhs = (1.0 - mu * mu) * cross;
    const double slack = (lhs - fn2) - rhs;
    worst_violation =
        std::min(worst_violation, slack / std::max(1.0, std::abs(rhs)));
    if (slack < -1e-9 * std::max(1.0, std::abs(rhs))) pass = false;
  }

  // Exact-structure cases. Orthogonal pair at t = 2: the gap equals
  // 2 ||G1||^2 ||G2||^2 and the bound is tight.
  {
    const std::size_t m = 4, n = 3;
    DenseMatrix g1 = random_normal(rng, m, n);
    DenseMatrix g2 = random_normal(rng, m, n);
    const double proj = frobenius_inner(g2, g1) /
                        (frobenius_norm(g1) * frobenius_norm(g1));
    g2 = sub(g2, scale(g1, proj));

    DenseMatrix l = add(matmul(g1, transpose(g1)), matmul(g2, transpose(g2)));
    DenseMatrix r = add(matmul(transpose(g1), g1), matmul(transpose(g2), g2));
    DenseMatrix est = shampoo_estimate({l, r});
    const double lhs = frobenius_norm(est) * frobenius_norm(est);

    DenseMatrix fisher(m * n, m * n);
    for (const auto& vg : {vec(g1), vec(g2)}) {
      for (std::size_t p = 0; p < m * n; ++p) {
        for (std::size_t q = 0; q < m * n; ++q) fisher(p, q) += vg[p] * vg[q];
      }
    }
    const double fn2 = frobenius_norm(fisher) * frobenius_norm(fisher);
    const double g1n2 = frobenius_norm(g1) * frobenius_norm(g1);
    const double g2n2 = frobenius_norm(g2) * frobenius_norm(g2);
    const double want_gap = 2.0 * g1n2 * g2n2;
    const double dev = std::abs((lhs - fn2) - want_gap) / want_gap;
    rep.records.push_back(
        {"props", seed, "coherence", "orthogonal_gap_dev", 0, dev});
    if (dev > 1e-9) pass = false;
  }
  // Collinear pair: mu = 1, the right side vanishes and the inequality is
  // tight.
  {
    const std::size_t m = 3, n = 3;
    DenseMatrix g1 = random_normal(rng, m, n);
    DenseMatrix g2 = scale(g1, -1.7);
    DenseMatrix l = add(matmul(g1, transpose(g1)), matmul(g2, transpose(g2)));
    DenseMatrix r = add(matmul(transpose(g1), g1), matmul(transpose(g2), g2));
    DenseMatrix est = shampoo_estimate({l, r});
    const double lhs = frobenius_norm(est) * frobenius_norm(est);
    DenseMatrix fisher(m * n, m * n);
    for (const auto& vg : {vec(g1), vec(g2)}) {
      for (std::size_t p = 0; p < m * n; ++p) {
        for (std::size_t q = 0; q < m * n; ++q) fisher(p, q) += vg[p] * vg[q];
      }
    }
    const double fn2 = frobenius_norm(fisher) * frobenius_norm(fisher);
    const double slack = (lhs - fn2) / std::max(1.0, fn2);
    rep.records.push_back(
        {"props", seed, "coherence", "collinear_slack", 0, slack});
    if (slack < -1e-9) pass = false;
  }

  rep.records.push_back(
      {"props", seed, "coherence", "max_identity_dev", 0, worst_identity});
  rep.records.push_back(
      {"props", seed, "coherence", "worst_violation", 0, worst_violation});
  rep.pass = pass;
  rep.records.push_back(
      {"props", seed, "coherence", "pass", 0, pass ? 1.0 : 0.0});
  return rep;
}

ValidatorReport validate_fisher_diag(long seed, int instances) {
  Rng rng(mix_seed(seed, 25));
  ValidatorReport rep;
  bool pass = true;
  double worst_balance = 0.0, worst_exact_off = 0.0;
  int growth_hits = 0;

  auto diag_off_norms = [](const DenseMatrix& f) {
    double diag2 = 0.0, off2 = 0.0;
    for (std::size_t i = 0; i < f.rows(); ++i) {
      for (std::size_t j = 0; j < f.cols(); ++j) {
        const double v = f(i, j) * f(i, j);
        if (i == j) {
          diag2 += v;
        } else {
          off2 += v;
        }
      }
    }
    return std::pair<double, double>{diag2, off2};
  };

  for (int i = 0; i < instances; ++i) {
    const std::size_t m = 2 + rng.below(4);  // 2..5
    const std::size_t n = 2 + rng.below(4);
    DenseMatrix a = random_spd(rng, m);
    DenseMatrix b = random_spd(rng, n);
    const bool exact = (i % 5 == 0);  // every fifth instance has E = 0

    DenseMatrix ab = kron(a, b);
    DenseMatrix e(m * n, m * n);
    if (!exact) {
      e = random_symmetric(rng, m * n);
      e = scale(e, 0.05 * frobenius_norm(ab) / frobenius_norm(e));
    }
    DenseMatrix f = add(ab, e);
    // Enforce ||E|| <= ||off(F)||, shrinking E when needed.
    for (int guard = 0; guard < 20 && !exact; ++guard) {
      auto [d2, o2] = diag_off_norms(f);
      (void)d2;
      if (frobenius_norm(e) <= std::sqrt(o2)) break;
      e = scale(e, 0.5);
      f = add(ab, e);
    }

    DenseMatrix q = kron(sym_eig(a).eigenvectors, sym_eig(b).eigenvectors);
    DenseMatrix rotated = matmul(matmul(transpose(q), f), q);

    const auto [d2, o2] = diag_off_norms(f);
    const auto [rd2, ro2] = diag_off_norms(rotated);
    const double total = d2 + o2;
    const double balance_dev = std::abs((rd2 + ro2) - total) / total;
    worst_balance = std::max(worst_balance, balance_dev);
    if (balance_dev > 1e-10) pass = false;

    if (exact) {
      const double off_rel = std::sqrt(ro2) / frobenius_norm(f);
      worst_exact_off = std::max(worst_exact_off, off_rel);
      if (off_rel > 1e-10) pass = false;
    }
    if (std::sqrt(rd2) >= std::sqrt(d2) * (1.0 - 1e-12)) ++growth_hits;
  }

  rep.records.push_back(
      {"props", seed, "fisher_diag", "max_balance_dev", 0, worst_balance});
  rep.records.push_back(
      {"props", seed, "fisher_diag", "max_exact_offdiag", 0, worst_exact_off});
  // Informational: fraction of instances where the rotated diagonal grew.
  rep.records.push_back({"props", seed, "fisher_diag", "diag_growth_rate", 0,
                         static_cast<double>(growth_hits) / instances});
  rep.pass = pass;
  rep.records.push_back(
      {"props", seed, "fisher_diag", "pass", 0, pass ? 1.0 : 0.0});
  return rep;
}

ValidatorReport validate_shampoo_bound(long seed, int streams) {
  Rng rng(mix_seed(seed, 26));
  ValidatorReport rep;
  bool pass = true;
  double worst_eig = 0.0;
  const double eps = 1e-6;

  for (int s = 0; s < streams; ++s) {
    const std::size_t m = (s % 2 == 0) ? 2 : 3;
    const std::size_t n = 2;
    const std::size_t r = std::min(m, n);
    KroneckerFactorPair pair{scale(DenseMatrix::identity(m), eps),
                             scale(DenseMatrix::identity(n), eps)};
    DenseMatrix fisher(m * n, m * n);
    const int t_max = 2 + static_cast<int>(rng.below(5));
    for (int t = 0; t < t_max; ++t) {
      DenseMatrix g = random_normal(rng, m, n);
      pair = shampoo_factor_update(pair, g, 1.0);
      const auto vg = vec(g);
      for (std::size_t p = 0; p < m * n; ++p) {
        for (std::size_t q = 0; q < m * n; ++q) fisher(p, q) += vg[p] * vg[q];
      }
      DenseMatrix gap = sub(shampoo_estimate(pair),
                            add(scale(DenseMatrix::identity(m * n), eps),
                                scale(fisher, 1.0 / static_cast<double>(r))));
      const double min_eig = sym_eig(gap).eigenvalues.back();
      worst_eig = std::min(worst_eig, min_eig);
      if (min_eig < -1e-8) pass = false;
    }
  }
  rep.records.push_back(
      {"props", seed, "shampoo_bound", "min_eigenvalue", 0, worst_eig});
  rep.pass = pass;
  rep.records.push_back(
      {"props", seed, "shampoo_bound", "pass", 0, pass ? 1.0 : 0.0});
  return rep;
}

ValidatorReport run_prop_validators(const ExperimentConfig& cfg) {
  assert_rearrange_identity();
  ValidatorReport all;
  for (const ValidatorReport& r : {validate_equivalence(cfg.seed, 200),
                                   validate_init_optimality(cfg.seed, 100),
                                   validate_dynamical(cfg.seed, 10),
                                   validate_coherence(cfg.seed, 500),
                                   validate_fisher_diag(cfg.seed, 100),
                                   validate_shampoo_bound(cfg.seed, 100)}) {
    all.pass = all.pass && r.pass;
    all.records.insert(all.records.end(), r.records.begin(), r.records.end());
  }
  for (auto& rec : all.records) rec.experiment = cfg.experiment;
  return all;
}

}  // namespace dykaf
