// fimest: command-line front end for divergence, FIM, CRLB and experiments.
//
// Exit codes: 0 ok, 1 numerical failure, 2 bad input, 3 duplicate points,
// 4 model failure, 5 degenerate perturbation design, 6 bad weights.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fimest/fimest.hpp"
#include "fimest/io.hpp"

namespace {

using fimest::Error;
using fimest::ErrorCode;
using nlohmann::json;

constexpr std::uint64_t kDefaultSeed = 20140901;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::DuplicatePoints:
      return 3;
    case ErrorCode::ModelFailure:
    case ErrorCode::SpawnFailure:
    case ErrorCode::Timeout:
    case ErrorCode::ProtocolError:
      return 4;
    case ErrorCode::RankDeficient:
    case ErrorCode::SingularNormalEquations:
      return 5;
    case ErrorCode::SingularWeight:
      return 6;
    case ErrorCode::ParseError:
    case ErrorCode::ShapeError:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::ConfigError:
    case ErrorCode::DomainError:
    case ErrorCode::NonFiniteInput:
    case ErrorCode::LabelMismatch:
      return 2;
    default:
      return 1;
  }
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError, what + ": not a number: '" + item + "'");
    }
  }
  if (out.empty()) throw Error(ErrorCode::ParseError, what + " is empty");
  return out;
}

void print_json(const json& doc) { std::cout << doc.dump(2) << '\n'; }

struct DivergenceArgs {
  std::string file_p;
  std::string file_q;
  bool header = false;
  bool clamp = false;
};

int cmd_divergence(const DivergenceArgs& a) {
  const fimest::PointCloud xp(fimest::io::read_csv_matrix(a.file_p, a.header));
  const fimest::PointCloud xq(fimest::io::read_csv_matrix(a.file_q, a.header));
  if (xp.dim() != xq.dim()) {
    throw Error(ErrorCode::DimensionMismatch, a.file_p + " has " + std::to_string(xp.dim()) + " columns, " +
                                                  a.file_q + " has " + std::to_string(xq.dim()));
  }
  auto est = fimest::estimate_divergence(xp, xq);
  if (a.clamp) est = fimest::clamped(est);
  print_json({{"d_hat", est.d_hat}, {"C", est.c}, {"n_p", est.n_p}, {"n_q", est.n_q}, {"alpha", est.alpha}});
  return 0;
}

struct FimArgs {
  std::string model = "gaussian";
  std::size_t dim = 0;
  double sigma = 1.0;
  std::string cmd;
  std::size_t param_dim = 0;
  std::size_t output_dim = 0;
  double timeout = 60.0;
  std::string theta;
  std::size_t n = 1000;
  std::size_t n_p = 0;
  std::size_t n_q = 0;
  double sigma_u = 0.0;
  double radius = 0.0;
  std::size_t m = 0;
  std::size_t diag_m = 20;
  double diag_scale = 0.0;
  std::string method = "ls";
  std::uint64_t seed = kDefaultSeed;
  bool shared_reference = false;
  std::string q_scale = "curvature";
};

std::unique_ptr<fimest::GenerativeModel> make_model(const FimArgs& a) {
  if (a.model == "gaussian") {
    if (a.dim == 0) throw Error(ErrorCode::ConfigError, "--model gaussian needs --dim");
    return std::make_unique<fimest::GaussianMeanModel>(a.dim, a.sigma);
  }
  if (a.model == "external") {
    if (a.cmd.empty()) throw Error(ErrorCode::ConfigError, "--model external needs --cmd");
    const std::size_t d = a.param_dim != 0 ? a.param_dim : a.dim;
    const std::size_t k = a.output_dim != 0 ? a.output_dim : d;
    if (d == 0) throw Error(ErrorCode::ConfigError, "--model external needs --param-dim (or --dim)");
    return std::make_unique<fimest::ExternalModel>(std::vector<std::string>{"/bin/sh", "-c", a.cmd}, d, k, a.timeout);
  }
  throw Error(ErrorCode::ConfigError, "unknown model '" + a.model + "' (expected gaussian or external)");
}

int cmd_fim(const FimArgs& a) {
  const auto model = make_model(a);
  const auto theta = parse_list(a.theta, "--theta");
  const std::size_t d = model->param_dim();
  if (theta.size() != d) {
    throw Error(ErrorCode::DimensionMismatch,
                "--theta has " + std::to_string(theta.size()) + " entries, model has " + std::to_string(d));
  }
  if (a.sigma_u > 0.0 && a.radius > 0.0) throw Error(ErrorCode::ConfigError, "--sigma-u and --radius are exclusive");
  const auto law = a.radius > 0.0 ? fimest::PerturbationLaw::ball(a.radius)
                                  : fimest::PerturbationLaw::gaussian(a.sigma_u > 0.0 ? a.sigma_u : std::sqrt(0.05));
  const std::size_t n_p = a.n_p != 0 ? a.n_p : a.n;
  const std::size_t n_q = a.n_q != 0 ? a.n_q : a.n;
  const std::size_t m = a.m != 0 ? a.m : 10 * fimest::packed_size(d);
  if (a.method != "ls" && a.method != "psd" && a.method != "both") {
    throw Error(ErrorCode::ConfigError, "--method must be ls, psd or both");
  }

  fimest::QOptions opts;
  opts.shared_reference = a.shared_reference;
  if (a.q_scale == "curvature") {
    opts.scale = fimest::QScale::Curvature;
  } else if (a.q_scale == "twice-divergence") {
    opts.scale = fimest::QScale::TwiceDivergence;
  } else {
    throw Error(ErrorCode::ConfigError, "--q-scale must be curvature or twice-divergence");
  }

  const auto design = fimest::sample_perturbations(d, m, law, fimest::derive_seed(a.seed, 0));
  const auto q = fimest::estimate_q(*model, theta, design, n_p, n_q, fimest::derive_seed(a.seed, 1), opts);

  json report = {{"model", a.model},   {"d", d},
                 {"m", m},             {"n_p", n_p},
                 {"n_q", n_q},         {"seed", a.seed},
                 {"perturbation", {{"law", fimest::to_string(law.kind)}, {"scale", law.scale}}},
                 {"q_scale", a.q_scale}};
  const auto ls = fimest::ls_fim(design, q);
  if (a.method == "ls") {
    report.update(fimest::io::fim_to_json(ls));
  } else {
    // Axis perturbations default to the expected energy of a design
    // direction, E|u|^2 = d scale^2.
    auto axis_law = law;
    axis_law.scale = a.diag_scale > 0.0 ? a.diag_scale : law.scale * std::sqrt(static_cast<double>(d));
    const auto mags = fimest::sample_axis_magnitudes(d, a.diag_m, axis_law, fimest::derive_seed(a.seed, 2));
    const auto diag = fimest::diagonal_fim(*model, theta, mags, n_p, n_q, fimest::derive_seed(a.seed, 3), opts);
    const auto psd = fimest::psd_constrained_fim(design, q, diag.diagonal);
    report.update(fimest::io::fim_to_json(psd));
    report["diagonal_targets"] = fimest::io::vector_to_json(diag.diagonal);
    if (a.method == "both") report["plain_ls"] = fimest::io::fim_to_json(ls);
  }
  print_json(report);
  return 0;
}

struct CrlbArgs {
  std::string fim;
  std::string weights;
  double epsilon = fimest::kDefaultLoading;
};

int cmd_crlb(const CrlbArgs& a) {
  json doc;
  try {
    doc = json::parse(fimest::io::read_file(a.fim));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, a.fim + ": " + e.what());
  }
  const Eigen::MatrixXd f = fimest::io::fim_from_json(doc);
  const auto crlb = fimest::invert_to_crlb(f, a.epsilon);
  json report = {{"crlb", fimest::io::matrix_to_json(crlb.c_mat)},
                 {"std_dev", fimest::io::vector_to_json(crlb.standard_deviations())},
                 {"loading", crlb.loading_used},
                 {"epsilon", a.epsilon}};
  if (!a.weights.empty()) {
    json wdoc;
    try {
      wdoc = json::parse(fimest::io::read_file(a.weights));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, a.weights + ": " + e.what());
    }
    report["volume"] = fimest::weighted_volume(crlb, fimest::io::weights_from_json(wdoc));
  }
  print_json(report);
  return 0;
}

struct ExperimentArgs {
  std::string name;
  std::string config;
  std::string output;
};

const std::vector<std::string> kExperiments = {"gaussian-mse-vs-dim", "gaussian-gap-vs-n"};

int cmd_experiment(const ExperimentArgs& a) {
  if (std::find(kExperiments.begin(), kExperiments.end(), a.name) == kExperiments.end()) {
    throw Error(ErrorCode::ConfigError,
                "unknown experiment '" + a.name + "'; valid names: " + kExperiments[0] + ", " + kExperiments[1]);
  }
  json doc;
  try {
    doc = json::parse(fimest::io::read_file(a.config));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, a.config + ": " + e.what());
  }
  std::string output = a.name + ".csv";
  auto cfg = fimest::io::experiment_config_from_json(doc, &output);
  if (!a.output.empty()) output = a.output;

  const bool by_dim = a.name == "gaussian-mse-vs-dim";
  const auto records = by_dim ? fimest::run_gaussian_mse_vs_dim(cfg) : fimest::run_gaussian_gap_vs_n(cfg);

  std::ofstream out(output, std::ios::binary);
  if (!out) throw Error(ErrorCode::ConfigError, "cannot write " + output);
  fimest::write_csv(out, records);
  out.close();

  auto key = by_dim ? [](const fimest::MseRecord& r) { return r.k; } : [](const fimest::MseRecord& r) { return r.n; };
  const auto dhalf = fimest::summarize(records, key, [](const fimest::MseRecord& r) { return r.mse_dhalf; });
  const auto sample = fimest::summarize(records, key, [](const fimest::MseRecord& r) { return r.mse_sample; });
  const auto gap = fimest::summarize(records, key, [](const fimest::MseRecord& r) { return r.gap(); });
  std::printf("%-8s %6s %24s %24s %24s\n", by_dim ? "K" : "n", "runs", "mse_dhalf (mean +- se)",
              "mse_sample (mean +- se)", "gap (mean +- se)");
  for (std::size_t i = 0; i < dhalf.size(); ++i) {
    std::printf("%-8zu %6zu %12.6g +- %-9.3g %12.6g +- %-9.3g %12.6g +- %-9.3g\n", dhalf[i].key, dhalf[i].count,
                dhalf[i].mean, dhalf[i].std_error, sample[i].mean, sample[i].std_error, gap[i].mean,
                gap[i].std_error);
  }
  std::printf("wrote %zu rows to %s\n", records.size(), output.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonparametric Fisher information estimation from sampled data"};
  app.require_subcommand(1);

  DivergenceArgs div;
  auto* sub_div = app.add_subcommand("divergence", "D_alpha estimate between two CSV samples");
  sub_div->add_option("file_p", div.file_p, "CSV sample from p")->required();
  sub_div->add_option("file_q", div.file_q, "CSV sample from q")->required();
  sub_div->add_flag("--header", div.header, "skip the first line of each file");
  sub_div->add_flag("--clamp", div.clamp, "floor d_hat at 0");

  FimArgs fim;
  auto* sub_fim = app.add_subcommand("fim", "estimate the FIM of a generative model at theta");
  sub_fim->add_option("--model", fim.model, "gaussian or external")->capture_default_str();
  sub_fim->add_option("--dim", fim.dim, "gaussian model dimension");
  sub_fim->add_option("--sigma", fim.sigma, "gaussian model standard deviation")->capture_default_str();
  sub_fim->add_option("--cmd", fim.cmd, "external sampler command (run through /bin/sh -c)");
  sub_fim->add_option("--param-dim", fim.param_dim, "external model parameter dimension");
  sub_fim->add_option("--output-dim", fim.output_dim, "external model sample dimension (default: param dim)");
  sub_fim->add_option("--timeout", fim.timeout, "external call timeout in seconds")->capture_default_str();
  sub_fim->add_option("--theta", fim.theta, "comma-separated parameter vector")->required();
  sub_fim->add_option("--n", fim.n, "samples per cloud")->capture_default_str();
  sub_fim->add_option("--n-p", fim.n_p, "reference samples (overrides --n)");
  sub_fim->add_option("--n-q", fim.n_q, "perturbed samples (overrides --n)");
  sub_fim->add_option("--sigma-u", fim.sigma_u, "gaussian perturbation std dev (default sqrt(0.05))");
  sub_fim->add_option("--radius", fim.radius, "uniform-ball perturbation radius");
  sub_fim->add_option("--m", fim.m, "number of perturbations (default 10 d(d+1)/2)");
  sub_fim->add_option("--diag-m", fim.diag_m, "axis perturbations per parameter for psd")->capture_default_str();
  sub_fim->add_option("--diag-scale", fim.diag_scale, "axis perturbation scale for psd (default scale * sqrt(d))");
  sub_fim->add_option("--method", fim.method, "ls, psd or both")->capture_default_str();
  sub_fim->add_option("--seed", fim.seed, "master seed")->capture_default_str();
  sub_fim->add_flag("--shared-reference", fim.shared_reference, "one reference sample for all perturbations");
  sub_fim->add_option("--q-scale", fim.q_scale, "curvature or twice-divergence")->capture_default_str();

  CrlbArgs crlb;
  auto* sub_crlb = app.add_subcommand("crlb", "CRLB matrix and weighted volume from a FIM JSON file");
  sub_crlb->add_option("--fim", crlb.fim, "FIM JSON (bare matrix or fim output)")->required();
  sub_crlb->add_option("--weights", crlb.weights, "JSON array of positive weights");
  sub_crlb->add_option("--epsilon", crlb.epsilon, "diagonal loading factor")->capture_default_str();

  ExperimentArgs exp;
  auto* sub_exp = app.add_subcommand("experiment", "run a Monte Carlo experiment and write CSV");
  sub_exp->add_option("name", exp.name, "gaussian-mse-vs-dim or gaussian-gap-vs-n")->required();
  sub_exp->add_option("--config", exp.config, "experiment config JSON")->required();
  sub_exp->add_option("--output", exp.output, "CSV path (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*sub_div) return cmd_divergence(div);
    if (*sub_fim) return cmd_fim(fim);
    if (*sub_crlb) return cmd_crlb(crlb);
    if (*sub_exp) return cmd_experiment(exp);
  } catch (const fimest::ModelError& e) {
    std::cerr << "fimest: " << e.what() << '\n';
    return 4;
  } catch (const Error& e) {
    std::cerr << "fimest: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "fimest: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
