#pragma once

// Command-line front end. run() takes the arguments after the program name, writes the command's
// artifact to `out` (or to --out) and a one-line JSON run report to `err`.
//
// Exit codes: 0 success, 2 invalid input, 3 certified failure, 4 I/O.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "detpol/detpol.hpp"

namespace detpol::cli {

enum Exit : int { kOk = 0, kInvalid = 2, kCertifiedFailure = 3, kIo = 4 };

inline std::string fnv1a(const std::string& data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Writes through a temporary file in the same directory and renames it into place.
inline void write_atomically(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  write_text(tmp, text);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename output into place: " + path);
  }
}

inline std::string csv_row(const std::vector<double>& xs) {
  std::string s;
  for (std::size_t k = 0; k < xs.size(); ++k) s += (k ? "," : "") + format_number(xs[k]);
  return s + "\n";
}

inline Json vector_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v[k]);
  return a;
}

inline std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::string tok;
  std::istringstream in(text);
  while (std::getline(in, tok, ',')) {
    std::istringstream ts(tok);
    std::string t;
    while (ts >> t) {
      try {
        std::size_t used = 0;
        out.push_back(std::stod(t, &used));
        if (used != t.size()) throw std::invalid_argument(t);
      } catch (const std::exception&) {
        throw ValidationError(what, "not a number: '" + t + "'");
      }
    }
  }
  return out;
}

class Session {
 public:
  Session(std::ostream& out, std::string out_path) : out_(out), out_path_(std::move(out_path)) {
    report["inputs"] = Json::object();
    report["outputs"] = Json::array();
  }

  Json report;

  void emit(const std::string& text) {
    if (out_path_.empty()) {
      out_ << text;
    } else {
      write_atomically(out_path_, text);
      report["outputs"].push_back(out_path_);
    }
  }

  std::string input(const std::string& path) {
    std::string text = read_text(path);
    report["inputs"][path] = fnv1a(text);
    return text;
  }

  // A model document path, or builtin:NAME.
  AtomlessMDP model(const std::string& arg) {
    if (arg.rfind("builtin:", 0) == 0) {
      report["inputs"][arg] = fnv1a(arg);
      return builtin(arg.substr(8));
    }
    return parse_model(input(arg));
  }

  // Policy files are aligned to the model grid on load.
  AnyPolicy policy(const std::string& path, const AtomlessMDP& m) {
    AnyPolicy p = parse_policy(input(path));
    if (auto* d = std::get_if<DeterministicPolicy>(&p)) {
      *d = aligned(*d, m.grid());
      validate(*d, m);
    } else {
      auto& s = std::get<StationaryPolicy>(p);
      s = aligned(s, m.grid());
      validate(s, m);
    }
    return p;
  }

  DeterministicPolicy deterministic(const std::string& path, const AtomlessMDP& m) {
    AnyPolicy p = policy(path, m);
    if (auto* d = std::get_if<DeterministicPolicy>(&p)) return *d;
    const auto& s = std::get<StationaryPolicy>(p);
    if (!is_deterministic(s)) throw ValidationError(path, "a deterministic policy is required");
    return to_deterministic(s);
  }

  VectorMeasure densities(const std::string& arg) {
    if (arg.rfind("builtin:lyapunov-onestep", 0) == 0) {
      report["inputs"][arg] = fnv1a(arg);
      const std::string rest = arg.substr(std::string("builtin:lyapunov-onestep").size());
      if (rest.empty()) return linear_density_example();
      auto n = parse_numbers(rest.substr(1), "densities");
      if (rest[0] != ':' || n.size() != 1 || n[0] < 1 || n[0] != std::floor(n[0])) throw DomainError("bad densities builtin '" + arg + "'");
      return linear_density_example(static_cast<std::size_t>(n[0]));
    }
    const std::string text = input(arg);
    Json doc;
    try {
      doc = Json::parse(text);
    } catch (const Json::parse_error& e) {
      throw ValidationError("", std::string("malformed JSON: ") + e.what());
    }
    return vector_measure_from_json(doc);
  }

 private:
  std::ostream& out_;
  std::string out_path_;
};

inline Json certificate_json(const AbsorptionCertificate& c) {
  Json j;
  j["L"] = c.L;
  j["iterations"] = c.iterations;
  Json tail = Json::array(), surv = Json::array();
  for (std::size_t n = 0; n <= 10; ++n) {
    tail.push_back(c.tail(n));
    surv.push_back(c.survival.empty() ? 1.0 : c.survival[std::min(n, c.survival.size() - 1)]);
  }
  j["tail"] = tail;
  j["survival"] = surv;
  return j;
}

inline Json mix_json(const MixCertificate& c) {
  Json j;
  j["target"] = vector_json(c.target);
  j["achieved"] = vector_json(c.achieved);
  j["error"] = c.error;
  Json levels = Json::array();
  for (const auto& t : c.trace) {
    Json l;
    l["depth"] = t.depth;
    l["criteria"] = t.coords;
    l["lambda"] = t.lambda;
    l["alpha_hat"] = t.alpha_hat;
    if (t.direction.size() > 0) {
      l["direction"] = vector_json(t.direction);
      l["offset"] = t.offset;
      l["dropped"] = t.dropped;
    }
    levels.push_back(l);
  }
  j["levels"] = levels;
  return j;
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deterministic realization of stationary policies in atomless MDPs", "detpol"};
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<double> tol;
  std::size_t grid = 0;
  std::optional<std::uint64_t> seed;
  std::string out_path;
  app.add_option("--tol", tol, "error tolerance");
  app.add_option("--grid", grid, "path grid size or number of hull directions");
  app.add_option("--seed", seed, "seed for generated test models");
  app.add_option("--out", out_path, "write the artifact here instead of standard output");

  std::string model_arg, p0_arg, p1_arg, name, kind, dens_arg;
  double lambda = 0.5;
  std::vector<double> target;
  std::string weights_arg;

  auto* validate_cmd = app.add_subcommand("validate", "check a model document");
  validate_cmd->add_option("model", model_arg)->required();
  auto* certify_cmd = app.add_subcommand("certify", "uniform-absorption certificate");
  certify_cmd->add_option("model", model_arg)->required();
  auto* evaluate_cmd = app.add_subcommand("evaluate", "performance vector of a policy");
  evaluate_cmd->add_option("model", model_arg)->required();
  evaluate_cmd->add_option("policy", p0_arg)->required();
  auto* path_cmd = app.add_subcommand("path", "threshold path between two deterministic policies");
  path_cmd->add_option("model", model_arg)->required();
  path_cmd->add_option("phi0", p0_arg)->required();
  path_cmd->add_option("phi1", p1_arg)->required();
  auto* mix_cmd = app.add_subcommand("mix", "deterministic policy with v = λ v0 + (1-λ) v1");
  mix_cmd->add_option("model", model_arg)->required();
  mix_cmd->add_option("phi0", p0_arg)->required();
  mix_cmd->add_option("phi1", p1_arg)->required();
  mix_cmd->add_option("lambda", lambda)->required();
  auto* der_cmd = app.add_subcommand("derandomize", "deterministic policy with the performance of a stationary one");
  der_cmd->add_option("model", model_arg)->required();
  der_cmd->add_option("policy", p0_arg)->required();
  auto* lya_cmd = app.add_subcommand("lyapunov", "ranges of vector measures");
  lya_cmd->require_subcommand(1);
  auto* hull_cmd = lya_cmd->add_subcommand("hull", "inner and outer range polytopes");
  hull_cmd->add_option("densities", dens_arg)->required();
  auto* find_cmd = lya_cmd->add_subcommand("find", "a set with a given measure vector");
  find_cmd->add_option("densities", dens_arg)->required();
  find_cmd->add_option("target", target)->required()->expected(1, -1);
  auto* tr_cmd = app.add_subcommand("transform", "model transformations");
  tr_cmd->require_subcommand(1);
  auto* disc_cmd = tr_cmd->add_subcommand("discount", "discounted model to absorbing form");
  disc_cmd->add_option("model", model_arg)->required();
  auto* weight_cmd = tr_cmd->add_subcommand("weight", "weighted normalization");
  weight_cmd->add_option("model", model_arg)->required();
  weight_cmd->add_option("weights", weights_arg, "comma-separated per-cell weights, or a file")->required();
  auto* builtin_cmd = app.add_subcommand("builtin", "print a named model document");
  builtin_cmd->add_option("name", name)->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  }

  Session s(out, out_path);
  s.report["command"] = args;
  const auto start = std::chrono::steady_clock::now();
  int code = kOk;
  auto finish = [&]() {
    s.report["exit_code"] = code;
    s.report["status"] = code == kOk ? "ok" : "error";
    s.report["wall_clock_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    err << s.report.dump() << "\n";
    return code;
  };

  try {
    if (*validate_cmd) {
      AtomlessMDP m = s.model(model_arg);
      Json j;
      j["cells"] = m.cells();
      j["actions"] = m.actions();
      j["criteria"] = m.criteria();
      j["kind"] = m.kind() == ModelKind::absorbing ? "absorbing" : "discounted";
      if (m.kind() == ModelKind::discounted) j["beta"] = m.beta();
      if (!m.note().empty()) j["note"] = m.note();
      j["valid"] = true;
      s.report["model"] = j;
      s.emit(j.dump(2) + "\n");
    } else if (*certify_cmd) {
      AtomlessMDP m = s.model(model_arg);
      const bool discounted = m.kind() == ModelKind::discounted;
      if (discounted) m = discounted_to_absorbing(m);
      Json j = certificate_json(absorption_certificate(m));
      j["input_kind"] = discounted ? "discounted" : "absorbing";
      if (!m.note().empty()) j["note"] = m.note();
      s.report["certificate"] = j;
      s.emit(j.dump(2) + "\n");
    } else if (*evaluate_cmd) {
      AtomlessMDP m = s.model(model_arg);
      StationaryPolicy pi = as_stationary(s.policy(p0_arg, m), m.actions());
      const double t = tol.value_or(1e-12);
      s.report["tol"] = t;
      PerformanceVector v = exact_performance(m, pi);
      auto cert = absorption_certificate(m);
      auto Q = occupancy(m, cert, pi, OccupancyOptions{t});
      const PerformanceVector vs = performance(m, Q);
      s.report["certificate"] = {{"L", cert.L},
                                 {"series_truncation", Q.truncation_error},
                                 {"series_difference", (vs - v).norm()},
                                 {"expected_lifetime", expected_lifetime(m, pi)}};
      std::string csv = "criterion,value\n";
      for (Eigen::Index n = 0; n < v.size(); ++n) csv += std::to_string(n) + "," + format_number(v[n]) + "\n";
      s.emit(csv);
    } else if (*path_cmd) {
      AtomlessMDP m = s.model(model_arg);
      DeterministicPolicy phi0 = s.deterministic(p0_arg, m), phi1 = s.deterministic(p1_arg, m);
      const std::size_t n = grid == 0 ? 11 : grid;
      if (n < 2) throw DomainError("--grid must be at least 2 for a path");
      const double t = tol.value_or(1e-12);
      s.report["tol"] = t;
      auto cert = absorption_certificate(m);
      auto ctx = make_context(m, cert, phi0, phi1);
      std::string csv = "alpha,threshold";
      for (int c = 0; c < m.criteria(); ++c) csv += ",v" + std::to_string(c);
      csv += ",tv_prev,tv_bound\n";
      std::optional<OccupancyMeasure> prev;
      double prev_alpha = 0.0, worst = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double alpha = k + 1 == n ? 1.0 : static_cast<double>(k) / static_cast<double>(n - 1);
        DeterministicPolicy phi = path_policy(ctx, alpha);
        auto Q = occupancy(m, cert, to_stationary(phi, m.actions()), OccupancyOptions{t});
        PerformanceVector v = exact_performance(m, phi);
        const double tv = prev ? total_variation(*prev, Q) : 0.0;
        const double bound = prev ? tv_modulus(ctx, alpha - prev_alpha) : 0.0;
        worst = std::max(worst, tv - bound);
        std::vector<double> row{alpha, path_threshold(ctx, alpha)};
        for (Eigen::Index c = 0; c < v.size(); ++c) row.push_back(v[c]);
        row.push_back(tv);
        row.push_back(bound);
        csv += csv_row(row);
        prev = std::move(Q);
        prev_alpha = alpha;
      }
      s.report["certificate"] = {{"L", cert.L}, {"q_total", ctx.q.total()}, {"max_tv_excess", worst}};
      s.emit(csv);
    } else if (*mix_cmd) {
      AtomlessMDP m = s.model(model_arg);
      DeterministicPolicy phi0 = s.deterministic(p0_arg, m), phi1 = s.deterministic(p1_arg, m);
      DerandomizeOptions opt;
      if (tol) opt.tol = *tol;
      s.report["tol"] = opt.tol;
      MixResult r = mix_pair(m, phi0, phi1, lambda, opt);
      s.report["certificate"] = mix_json(r.certificate);
      s.report["certificate"]["lambda"] = lambda;
      s.emit(format_policy(r.policy));
    } else if (*der_cmd) {
      AtomlessMDP m = s.model(model_arg);
      StationaryPolicy pi = as_stationary(s.policy(p0_arg, m), m.actions());
      DerandomizeOptions opt;
      if (tol) opt.tol = *tol;
      s.report["tol"] = opt.tol;
      MixResult r = derandomize(m, pi, opt);
      s.report["certificate"] = mix_json(r.certificate);
      s.emit(format_policy(r.policy));
    } else if (*hull_cmd) {
      VectorMeasure vm = s.densities(dens_arg);
      const std::size_t count = grid == 0 ? 360 : grid;
      RangeHull H = range_hull(vm, count);
      std::string csv;
      for (int n = 0; n < vm.dimension(); ++n) csv += "d" + std::to_string(n) + ",";
      csv += "support";
      for (int n = 0; n < vm.dimension(); ++n) csv += ",v" + std::to_string(n);
      csv += "\n";
      for (std::size_t k = 0; k < H.directions.size(); ++k) {
        std::vector<double> row(H.directions[k].data(), H.directions[k].data() + H.directions[k].size());
        row.push_back(H.support[k]);
        for (Eigen::Index n = 0; n < H.vertices[k].size(); ++n) row.push_back(H.vertices[k][n]);
        csv += csv_row(row);
      }
      s.report["certificate"] = {{"directions", count}};
      if (!std::isnan(H.gap)) s.report["certificate"]["gap"] = H.gap;
      s.emit(csv);
    } else if (*find_cmd) {
      VectorMeasure vm = s.densities(dens_arg);
      const double t = tol.value_or(1e-8);
      s.report["tol"] = t;
      Eigen::VectorXd tv = Eigen::Map<Eigen::VectorXd>(target.data(), static_cast<Eigen::Index>(target.size()));
      IntervalSet B = find_set(vm, tv, t);
      Eigen::VectorXd got = measure_of(vm, B);
      s.report["certificate"] = {{"target", target}, {"achieved", vector_json(got)}, {"error", (got - tv).norm()}};
      s.emit(format_set(B));
    } else if (*disc_cmd) {
      AtomlessMDP m = s.model(model_arg);
      s.emit(model_to_json(discounted_to_absorbing(m)).dump(2) + "\n");
    } else if (*weight_cmd) {
      AtomlessMDP m = s.model(model_arg);
      std::vector<double> w;
      if (std::filesystem::exists(weights_arg)) {
        w = parse_numbers(s.input(weights_arg), "weights");
      } else {
        w = parse_numbers(weights_arg, "weights");
      }
      s.emit(model_to_json(weighted_transform(m, w)).dump(2) + "\n");
    } else if (*builtin_cmd) {
      if (name == "random") {
        if (!seed) throw ValidationError("--seed", "the random model needs an explicit seed");
        s.emit(model_to_json(random_model(*seed)).dump(2) + "\n");
      } else {
        s.emit(model_to_json(builtin(name)).dump(2) + "\n");
      }
    }
  } catch (const IoError& e) {
    code = kIo;
    s.report["error"] = e.what();
  } catch (const ValidationError& e) {
    code = kInvalid;
    s.report["error"] = e.what();
    s.report["path"] = e.path();
  } catch (const CertifiedFailure& e) {
    code = kCertifiedFailure;
    s.report["error"] = e.what();
    s.report["residual"] = e.residual();
  } catch (const InfeasibleError& e) {
    code = kCertifiedFailure;
    s.report["error"] = e.what();
    s.report["undecidable"] = e.undecidable();
  } catch (const NotCertifiedError& e) {
    code = kCertifiedFailure;
    s.report["error"] = e.what();
  } catch (const ToleranceError& e) {
    code = kCertifiedFailure;
    s.report["error"] = e.what();
  } catch (const Error& e) {
    code = kInvalid;
    s.report["error"] = e.what();
  } catch (const std::exception& e) {
    code = kInvalid;
    s.report["error"] = e.what();
  }
  if (code != kOk) err << "error: " << s.report["error"].get<std::string>() << "\n";
  return finish();
}

}  // namespace detpol::cli
