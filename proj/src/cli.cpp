// dykaf/cli.cpp

#include "dykaf/cli.hpp"

#include <cmath>
#include <iostream>
#include <sstream>

#include "dykaf/experiments.hpp"
#include "dykaf/kron_approx.hpp"
#include "dykaf/rng.hpp"

namespace dykaf {

namespace {

const char* const kSubcommands[] = {"fisher-sim", "hessian-gap", "props",
                                    "train", "selftest"};

bool is_subcommand(const std::string& s) {
  for (const char* c : kSubcommands) {
    if (s == c) return true;
  }
  return false;
}

}  // namespace

std::string usage_text() {
  std::ostringstream os;
  os << "usage: dykaf <subcommand> [--config FILE] [--key value | key=value ...]\n"
     << "\n"
     << "subcommands:\n"
     << "  fisher-sim    random-gradient Fisher approximation study\n"
     << "  hessian-gap   softmax-regression Hessian approximation study\n"
     << "  props         run the proposition validators\n"
     << "  train         train a softmax model with one optimizer\n"
     << "  selftest      check the core numerical identities\n"
     << "\n"
     << "common keys: seed, num_seeds, jobs, output, format (csv|json),\n"
     << "  m, n, steps, ema_beta, learning_rate, beta1, beta2, epsilon,\n"
     << "  precond_frequency, rank1_second_moment, weight_decay,\n"
     << "  bias_correction, shampoo_matrix_eps, factor_beta,\n"
     << "  second_moment_decay, shampoo_factor_beta, dataset_path,\n"
     << "  allow_synth_fallback, synth_classes, synth_dim, synth_count,\n"
     << "  sample_grid, train_steps, eval_every, optimizer,\n"
     << "  unnormalized_ema\n"
     << "\n"
     << "Precedence: inline overrides > --config file > built-in defaults.\n"
     << "Datasets are searched under $DYKAF_DATA_DIR when a relative\n"
     << "dataset_path does not resolve directly.\n";
  return os.str();
}

CliInvocation parse_args(const std::vector<std::string>& args) {
  CliInvocation inv;
  if (args.empty()) {
    throw CliUsageError("missing subcommand; try --help");
  }

  std::size_t i = 0;
  if (args[0] == "--help" || args[0] == "-h") {
    inv.help = true;
    return inv;
  }
  if (!is_subcommand(args[0])) {
    throw CliUsageError("unknown subcommand '" + args[0] + "'; try --help");
  }
  inv.subcommand = args[0];
  ++i;

  for (; i < args.size(); ++i) {
    const std::string& tok = args[i];
    if (tok == "--help" || tok == "-h") {
      inv.help = true;
      return inv;
    }
    if (tok == "--config") {
      if (i + 1 >= args.size()) {
        throw CliUsageError("--config requires a file argument");
      }
      inv.config_path = args[++i];
      continue;
    }
    if (tok.rfind("--", 0) == 0) {
      const std::string body = tok.substr(2);
      if (body.empty()) throw CliUsageError("stray '--'");
      const auto eq = body.find('=');
      if (eq != std::string::npos) {
        if (eq == 0) throw CliUsageError("malformed flag '" + tok + "'");
        inv.overrides.emplace_back(body.substr(0, eq), body.substr(eq + 1));
      } else {
        if (i + 1 >= args.size()) {
          throw CliUsageError("flag --" + body + " requires a value");
        }
        inv.overrides.emplace_back(body, args[++i]);
      }
      continue;
    }
    const auto eq = tok.find('=');
    if (eq != std::string::npos && eq > 0) {
      inv.overrides.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
      continue;
    }
    throw CliUsageError("unexpected argument '" + tok + "'");
  }
  return inv;
}

SelftestResult selftest(long seed) {
  Rng rng(static_cast<std::uint64_t>(seed) * 0x9e3779b9u + 17u);
  SelftestResult out;
  std::ostringstream os;

  auto random_mat = [&rng](std::size_t m, std::size_t n) {
    DenseMatrix a(m, n);
    for (double& x : a.data()) x = rng.normal();
    return a;
  };
  auto random_spd = [&](std::size_t n) {
    DenseMatrix b = random_mat(n, n);
    DenseMatrix a = matmul(b, transpose(b));
    for (std::size_t i = 0; i < n; ++i) a(i, i) += 1e-3;
    return a;
  };
  auto check = [&](const char* name, bool ok, double worst) {
    ++out.total;
    if (ok) ++out.passed;
    os << (ok ? "PASS" : "FAIL") << "  " << name
       << "  (worst deviation " << worst << ")\n";
  };

  {  // rearrange rank-1 identity, exact
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
      DenseMatrix b = random_mat(3, 2), c = random_mat(2, 4);
      DenseMatrix r = rearrange(kron(b, c), 3, 2, 2, 4);
      auto vb = vec(b);
      auto vc = vec(c);
      for (std::size_t p = 0; p < vb.size(); ++p) {
        for (std::size_t q = 0; q < vc.size(); ++q) {
          worst = std::max(worst, std::abs(r(p, q) - vb[p] * vc[q]));
        }
      }
    }
    check("rearrange rank-1 identity", worst == 0.0, worst);
  }
  {  // kron-identity: vec(B X C^T) == (B kron C) vec(X)
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
      DenseMatrix b = random_mat(3, 4), c = random_mat(2, 3);
      DenseMatrix x = random_mat(4, 3);
      auto lhs = vec(matmul(matmul(b, x), transpose(c)));
      DenseMatrix rhs = matmul(kron(b, c), mat(vec(x), 12, 1));
      for (std::size_t t = 0; t < lhs.size(); ++t) {
        worst = std::max(worst, std::abs(lhs[t] - rhs.data()[t]));
      }
    }
    check("kron-identity vec(BXC^T) = (B kron C) vec(X)", worst <= 1e-12,
          worst);
  }
  {  // QR orthogonality and reconstruction
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
      DenseMatrix a = random_mat(7, 4);
      auto [q, r] = qr(a);
      DenseMatrix qtq = matmul(transpose(q), q);
      for (std::size_t ii = 0; ii < 4; ++ii) {
        for (std::size_t jj = 0; jj < 4; ++jj) {
          worst = std::max(worst, std::abs(qtq(ii, jj) - (ii == jj ? 1.0 : 0.0)));
        }
      }
      worst = std::max(worst, frobenius_norm(sub(a, matmul(q, r))) /
                                  frobenius_norm(a));
    }
    check("QR orthogonality and reconstruction", worst <= 1e-12, worst);
  }
  {  // symmetric eigensolver reconstruction
    double worst = 0.0;
    for (int rep = 0; rep < 10; ++rep) {
      DenseMatrix a = symmetrize(random_mat(8, 8));
      auto d = sym_eig(a);
      DenseMatrix lam(8, 8);
      for (std::size_t ii = 0; ii < 8; ++ii) lam(ii, ii) = d.eigenvalues[ii];
      DenseMatrix rec = matmul(matmul(d.eigenvectors, lam),
                               transpose(d.eigenvectors));
      worst = std::max(worst, frobenius_norm(sub(a, rec)) / frobenius_norm(a));
    }
    check("sym_eig reconstruction", worst <= 1e-10, worst);
  }
  {  // projector-splitting rearranged-space equivalence
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
      DenseMatrix l = random_spd(3), r = random_spd(4);
      DenseMatrix g = random_mat(3, 4);
      KroneckerFactorPair fast = kron_proj_split({l, r}, g);
      Rank1Factorization st;
      st.u = vec(l);
      st.v = vec(r);
      const double ln = vector_norm(st.u), rn = vector_norm(st.v);
      for (double& x : st.u) x /= ln;
      for (double& x : st.v) x /= rn;
      st.s = ln * rn;
      Rank1Factorization o = proj_split_step(st, kron(g, g));
      const auto vl = vec(fast.l);
      const auto vr = vec(fast.r);
      double num = 0.0, den = 0.0;
      for (std::size_t p = 0; p < vl.size(); ++p) {
        for (std::size_t q = 0; q < vr.size(); ++q) {
          const double ref = o.u[p] * o.s * o.v[q];
          num += (vl[p] * vr[q] - ref) * (vl[p] * vr[q] - ref);
          den += ref * ref;
        }
      }
      worst = std::max(worst, std::sqrt(num / den));
    }
    check("kron_proj_split == dense projector splitting", worst <= 1e-10,
          worst);
  }
  {  // initialization optimality against the NKP oracle
    double worst = 0.0;
    for (int rep = 0; rep < 10; ++rep) {
      DenseMatrix g = random_mat(4, 3);
      KroneckerFactorPair p = init_from_gradient(g);
      const auto vg = vec(g);
      DenseMatrix f(12, 12);
      for (std::size_t ii = 0; ii < 12; ++ii) {
        for (std::size_t jj = 0; jj < 12; ++jj) f(ii, jj) = vg[ii] * vg[jj];
      }
      NkpResult oracle = nkp_best(f, 4, 3);
      const double resid = frobenius_norm(sub(f, kron(p.l, p.r)));
      worst = std::max(worst,
                       std::abs(resid - oracle.residual) / oracle.residual);
    }
    check("init_from_gradient attains the NKP optimum", worst <= 1e-9, worst);
  }

  out.pass = out.passed == out.total;
  os << "selftest: " << out.passed << "/" << out.total << " checks passed\n";
  out.report = os.str();
  return out;
}

int dispatch(const CliInvocation& invocation) {
  if (invocation.help) {
    std::cout << usage_text();
    return 0;
  }

  ExperimentConfig cfg;
  try {
    cfg = default_config(invocation.subcommand);
    if (!invocation.config_path.empty()) {
      apply_config_file(cfg, invocation.config_path);
    }
    for (const auto& [key, value] : invocation.overrides) {
      apply_override(cfg, key, value);
    }
    cfg.hp.validate();
  } catch (const Error& e) {
    std::cerr << "dykaf: " << e.what() << "\n";
    return 2;
  }

  try {
    if (invocation.subcommand == "selftest") {
      SelftestResult r = selftest(cfg.seed);
      std::cout << r.report;
      return r.pass ? 0 : 1;
    }
    if (invocation.subcommand == "fisher-sim") {
      auto records = run_fisher_sim(cfg);
      emit(records, cfg.output, cfg.format);
      std::cout << "fisher-sim: " << records.size() << " records -> "
                << cfg.output << "\n";
      return 0;
    }
    if (invocation.subcommand == "hessian-gap") {
      auto records = run_hessian_gap(cfg);
      emit(records, cfg.output, cfg.format);
      std::cout << "hessian-gap: " << records.size() << " records -> "
                << cfg.output << "\n";
      return 0;
    }
    if (invocation.subcommand == "train") {
      auto records = run_train(cfg);
      emit(records, cfg.output, cfg.format);
      std::cout << "train: " << records.size() << " records -> " << cfg.output
                << "\n";
      return 0;
    }
    // props
    ValidatorReport report = run_prop_validators(cfg);
    emit(report.records, cfg.output, cfg.format);
    for (const auto& r : report.records) {
      if (r.metric == "pass") {
        std::cout << (r.value == 1.0 ? "PASS  " : "FAIL  ") << r.method
                  << "\n";
      }
    }
    std::cout << "props: " << (report.pass ? "all suites passed"
                                           : "suite failures recorded")
              << " -> " << cfg.output << "\n";
    return report.pass ? 0 : 1;
  } catch (const Error& e) {
    std::cerr << "dykaf: " << e.what() << "\n";
    return 1;
  }
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  try {
    CliInvocation inv = parse_args(args);
    return dispatch(inv);
  } catch (const CliUsageError& e) {
    std::cerr << "dykaf: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "dykaf: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace dykaf
