#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "deal/errors.hpp"
#include "deal/image_io.hpp"
#include "deal/linop.hpp"
#include "deal/maskgen.hpp"
#include "deal/model.hpp"
#include "deal/model_io.hpp"
#include "deal/multiconv.hpp"
#include "deal/solver.hpp"
#include "deal/synthetic.hpp"
#include "deal/theory.hpp"
#include "deal/train.hpp"

namespace fs = std::filesystem;
using namespace deal;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNotConverged = 2;

struct SolveArgs {
  std::string model;
  std::string input;
  std::string output;
  std::string truth;
  std::string op;
  std::string x0 = "zero";
  std::string csv;
  double sigma = 25.0;
  std::optional<double> lambda;
  std::optional<double> add_noise;
  double eps_in = 1e-8;
  double eps_out = 1e-5;
  int k_in = 1000;
  int k_out = 1000;
  std::uint64_t seed = 0;
  int bit_depth = 8;
  bool simulate = false;
  std::string size;
};

void add_solve_options(CLI::App& cmd, SolveArgs& a, bool with_output = true) {
  cmd.add_option("--model", a.model, "Model container")->required()->check(CLI::ExistingFile);
  cmd.add_option("--input", a.input, "Input image (PGM/PPM)")->required()->check(CLI::ExistingFile);
  if (with_output) cmd.add_option("--output", a.output, "Output image path")->required();
  cmd.add_option("--sigma", a.sigma, "Model noise level on the 0-255 scale")
      ->check(CLI::NonNegativeNumber);
  cmd.add_option("--lambda", a.lambda, "Regularization strength (default kappa(sigma))")
      ->check(CLI::NonNegativeNumber);
  cmd.add_option("--eps-in", a.eps_in, "CG stop threshold on ||Ax-b||^2")
      ->check(CLI::PositiveNumber);
  cmd.add_option("--eps-out", a.eps_out, "Outer relative-change threshold")
      ->check(CLI::PositiveNumber);
  cmd.add_option("--k-in", a.k_in, "CG iteration cap")->check(CLI::PositiveNumber);
  cmd.add_option("--k-out", a.k_out, "Outer iteration cap")->check(CLI::PositiveNumber);
  cmd.add_option("--x0", a.x0, "Initial iterate: zero, adjoint or file:PATH");
  cmd.add_option("--seed", a.seed, "Seed for synthesized noise");
  cmd.add_option("--csv", a.csv, "Convergence log (k,rel_change,cg_iters,psnr)");
  cmd.add_option("--truth", a.truth, "Ground truth image for PSNR")->check(CLI::ExistingFile);
  cmd.add_option("--add-noise", a.add_noise, "Add Gaussian noise of this level (0-255 scale) first")
      ->check(CLI::NonNegativeNumber);
  cmd.add_option("--bit-depth", a.bit_depth, "Output bit depth")->check(CLI::IsMember({8, 16}));
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

SolveConfig make_solve_config(const SolveArgs& a, const ForwardOperator& h) {
  SolveConfig c;
  c.k_in = a.k_in;
  c.k_out = a.k_out;
  c.eps_in = a.eps_in;
  c.eps_out = a.eps_out;
  c.lambda_override = a.lambda;
  if (a.x0 == "zero") {
    c.x0_mode = InitMode::zero;
  } else if (a.x0 == "adjoint") {
    c.x0_mode = InitMode::adjoint;
  } else if (a.x0.rfind("file:", 0) == 0) {
    c.x0_mode = InitMode::given;
    c.x0 = read_image(a.x0.substr(5));
    require_shape(c.x0, h.input_shape(), "--x0 image");
  } else {
    throw std::invalid_argument("--x0 must be zero, adjoint or file:PATH");
  }
  c.validate();
  return c;
}

void write_convergence_csv(const std::string& path, const SolveReport& report, bool with_psnr) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << (with_psnr ? "k,rel_change,cg_iters,psnr\n" : "k,rel_change,cg_iters\n");
  out << std::setprecision(17);
  for (const auto& r : report.records) {
    out << r.k << ',' << r.rel_change << ',' << r.cg_iters;
    if (with_psnr) out << ',' << r.psnr;
    out << '\n';
  }
}

// Reconstructs from y and writes the image, log and summary; returns the
// exit code.
int finish_solve(const SolveArgs& a, const DealModel& model, const ForwardOperator& h,
                 const Measurement& y, const Image* truth) {
  const SolveConfig cfg = make_solve_config(a, h);
  SolveReport report;
  const Image x = deal_reconstruct(model, h, y, a.sigma, cfg, report, truth);
  write_image(a.output, x, a.bit_depth);
  if (!a.csv.empty()) write_convergence_csv(a.csv, report, truth != nullptr);
  std::cout << "outer_iterations " << report.outer_iterations << "\n";
  std::cout << "converged " << (report.converged ? "true" : "false") << "\n";
  std::cout << "lambda " << fmt(report.lambda) << "\n";
  if (truth != nullptr) std::cout << "psnr " << fmt(psnr(x, *truth)) << "\n";
  if (!report.converged) {
    std::cerr << "warning: no convergence within " << a.k_out << " outer iterations\n";
    return kExitNotConverged;
  }
  return kExitOk;
}

std::optional<Image> load_truth(const SolveArgs& a) {
  if (a.truth.empty()) return std::nullopt;
  return read_image(a.truth);
}

int cmd_denoise(const SolveArgs& a) {
  const DealModel model = load_model(a.model);
  Image input = read_image(a.input);
  if (a.add_noise) input = add_noise(input, *a.add_noise, a.seed);
  const ForwardOperator h = make_operator(OperatorSpec{}, input.shape());
  const auto truth = load_truth(a);
  if (truth) require_shape(*truth, input.shape(), "--truth image");
  if (truth) std::cout << "psnr_input " << fmt(psnr(input, *truth)) << "\n";
  return finish_solve(a, model, h, input, truth ? &*truth : nullptr);
}

Shape parse_size(const std::string& size, int channels) {
  int h = 0;
  int w = 0;
  char x = 0;
  std::istringstream in(size);
  if (!(in >> h >> x >> w) || x != 'x' || h < 1 || w < 1)
    throw std::invalid_argument("--size must look like HxW");
  return Shape{channels, h, w};
}

int cmd_restore(const SolveArgs& a) {
  const DealModel model = load_model(a.model);
  const OperatorSpec spec = load_operator_spec(a.op);
  const Image input = read_image(a.input);

  if (a.simulate) {
    const ForwardOperator h = make_operator(spec, input.shape());
    Measurement y = h.apply(input);
    const double level = a.add_noise.value_or(0.0);
    y = add_noise(y, level, a.seed);
    const Image zero_fill = h.adjoint(y);
    std::cout << "psnr_adjoint " << fmt(psnr(zero_fill, input)) << "\n";
    return finish_solve(a, model, h, y, &input);
  }

  if (spec.kind == OperatorKind::fourier_mask)
    throw std::invalid_argument("fourier_mask measurements are not images; use --simulate");
  Shape target = input.shape();
  if (!a.size.empty()) {
    target = parse_size(a.size, input.channels());
  } else if (spec.kind == OperatorKind::conv_downsample) {
    target.height *= spec.stride;
    target.width *= spec.stride;
  }
  const ForwardOperator h = make_operator(spec, target);
  Measurement y = input;
  if (a.add_noise) y = add_noise(y, *a.add_noise, a.seed);
  require_shape(y, h.output_shape(), "measurement");
  const auto truth = load_truth(a);
  if (truth) require_shape(*truth, target, "--truth image");
  return finish_solve(a, model, h, y, truth ? &*truth : nullptr);
}

struct TrainArgs {
  std::string data;
  int synthetic = 0;
  std::string output;
  std::string csv;
  std::string init;
  int steps = 500;
  double lr = 5e-4;
  double lr_end = 4e-4;
  int fine_steps = 0;
  double fine_lr = 2e-4;
  double fine_lr_end = 1e-7;
  int filters = 8;
  int batch = 4;
  int patch = 32;
  double gamma = 1e-4;
  int validate_every = 100;
  int val_count = 4;
  std::uint64_t seed = 0;
  double sigma_min = 0.0;
  double sigma_max = 50.0;
  int k_out_min = 15;
  int k_out_max = 60;
  double eps_m = 1e-3;
};

std::vector<Image> load_directory(const std::string& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".pgm" || ext == ".ppm")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Image> images;
  for (const auto& f : files) images.push_back(read_image(f));
  if (images.empty()) throw std::invalid_argument("no PGM/PPM images in " + dir);
  return images;
}

int cmd_train(const TrainArgs& a) {
  std::vector<Image> dataset;
  std::vector<Image> validation;
  if (!a.data.empty()) {
    dataset = load_directory(a.data);
    const int channels = dataset.front().channels();
    validation = piecewise_constant_set(a.val_count, channels, a.patch, a.seed + 1000003);
  } else {
    dataset = piecewise_constant_set(std::max(a.synthetic, 1), 1, 2 * a.patch, a.seed);
    validation = piecewise_constant_set(a.val_count, 1, a.patch, a.seed + 1000003);
  }

  DealModel model;
  if (!a.init.empty()) {
    model = load_model(a.init);
  } else {
    ModelConfig mc;
    mc.in_channels = dataset.front().channels();
    mc.num_filters = a.filters;
    mc.eps_m = a.eps_m;
    mc.seed = a.seed;
    model = DealModel::initialize(mc);
  }

  TrainConfig cfg;
  cfg.phases = {{a.steps, a.lr, a.lr_end}};
  if (a.fine_steps > 0) cfg.phases.push_back({a.fine_steps, a.fine_lr, a.fine_lr_end});
  cfg.batch_size = a.batch;
  cfg.patch_size = a.patch;
  cfg.gamma = a.gamma;
  cfg.validate_every = a.validate_every;
  cfg.seed = a.seed;
  cfg.sigma_min = a.sigma_min;
  cfg.sigma_max = a.sigma_max;
  cfg.k_out_min = a.k_out_min;
  cfg.k_out_max = a.k_out_max;

  std::ofstream log;
  if (!a.csv.empty()) {
    log.open(a.csv);
    if (!log) throw FormatError("cannot write " + a.csv);
    log << "step,loss,term1,term2,term3,psnr_val\n" << std::setprecision(17);
  }
  TrainResult result = train(model, dataset, validation, cfg, [&](const TrainLogRow& r) {
    if (log) {
      log << r.step << ',' << r.loss << ',' << r.term1 << ',' << r.term2 << ',' << r.term3 << ','
          << r.psnr_val << '\n';
      log.flush();
    }
    if (!std::isnan(r.psnr_val))
      std::cerr << "step " << r.step << " loss " << fmt(r.loss) << " psnr_val " << fmt(r.psnr_val)
                << "\n";
  });
  if (cfg.total_steps() > 0) result.best.project_constraints(1e-8, 5000);
  save_model(a.output, result.best);
  std::cout << "steps " << cfg.total_steps() << "\n";
  if (cfg.total_steps() > 0) {
    std::cout << "best_step " << result.best_step << "\n";
    std::cout << "best_psnr_val " << fmt(result.best_psnr) << "\n";
  }
  return kExitOk;
}

struct InspectArgs {
  std::string what;
  std::string model;
  std::string input;
  std::string output;
  std::string csv;
  std::string op;
  double sigma = 25.0;
  std::optional<double> lambda;
  std::size_t pixel = 0;
  int grid = 32;
  int k_out = 1000;
  double eps_out = 1e-5;
  double eps_in = 1e-8;
  std::uint64_t seed = 0;
  int trials = 40;
  int pairs = 100;
};

// Maps [lo, hi] to [0, 1] for display.
Image rescale(const Image& x, double lo, double hi) {
  Image out = x;
  const double span = hi > lo ? hi - lo : 1.0;
  for (double& v : out.data()) v = std::clamp((v - lo) / span, 0.0, 1.0);
  return out;
}

int inspect_filters(const InspectArgs& a) {
  const DealModel model = load_model(a.model);
  const Tensor k = mc_effective_kernels(model.w);
  const int n = k.channels();
  const int size = k.height();
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  const int rows = (n + cols - 1) / cols;
  Image montage(Shape{1, rows * (size + 1) + 1, cols * (size + 1) + 1}, 1.0);
  for (int t = 0; t < n; ++t) {
    const auto plane = k.plane(t);
    double peak = 0.0;
    for (double v : plane) peak = std::max(peak, std::abs(v));
    if (peak == 0.0) peak = 1.0;
    const int r0 = 1 + (t / cols) * (size + 1);
    const int c0 = 1 + (t % cols) * (size + 1);
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j)
        montage.at(0, r0 + i, c0 + j) = 0.5 + 0.5 * plane[i * size + j] / peak;
  }
  write_image(a.output, montage);
  std::cout << "kernels " << n << "\n";
  return kExitOk;
}

int inspect_gram(const InspectArgs& a) {
  const DealModel model = load_model(a.model);
  const GramSpectrum g = mc_gram_spectrum(model.w, a.grid, a.grid);
  const int in = model.in_channels();
  // Center the impulse response of the first channel for display.
  Image shown(Shape{1, a.grid, a.grid});
  double lo = 0.0;
  double hi = 0.0;
  for (int i = 0; i < a.grid; ++i)
    for (int j = 0; j < a.grid; ++j) {
      const double v = g.impulse.at(0, (i + a.grid / 2) % a.grid, (j + a.grid / 2) % a.grid);
      shown.at(0, i, j) = v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const double peak = std::max(std::abs(lo), std::abs(hi));
  write_image(a.output, rescale(shown, -peak, peak));
  if (!a.csv.empty()) {
    std::ofstream out(a.csv);
    if (!out) throw FormatError("cannot write " + a.csv);
    out << "index,eigenvalue\n" << std::setprecision(17);
    for (std::size_t i = 0; i < g.eigenvalues.size(); ++i)
      out << i << ',' << g.eigenvalues[i] << '\n';
  }
  const auto zeros = std::count_if(g.eigenvalues.begin(), g.eigenvalues.end(),
                                   [](double e) { return e <= 1e-10; });
  std::cout << "channels " << in << "\n";
  std::cout << "eigenvalues " << g.eigenvalues.size() << "\n";
  std::cout << "zero_eigenvalues " << zeros << "\n";
  std::cout << "min_eigenvalue " << fmt(g.eigenvalues.front()) << "\n";
  std::cout << "max_eigenvalue " << fmt(g.eigenvalues.back()) << "\n";
  return kExitOk;
}

SolveConfig inspect_solve_config(const InspectArgs& a) {
  SolveConfig c;
  c.k_out = a.k_out;
  c.eps_out = a.eps_out;
  c.eps_in = a.eps_in;
  c.lambda_override = a.lambda;
  c.validate();
  return c;
}

Image channel_mean(const Mask& m) {
  Image out(Shape{1, m.height(), m.width()});
  for (int c = 0; c < m.channels(); ++c) {
    const auto p = m.plane(c);
    for (std::size_t i = 0; i < p.size(); ++i) out[i] += p[i] / m.channels();
  }
  return out;
}

int inspect_masks(const InspectArgs& a) {
  const DealModel model = load_model(a.model);
  const Image y = read_image(a.input);
  const ForwardOperator h = make_operator(OperatorSpec{}, y.shape());
  const DealSolver solver(model, h);
  fs::create_directories(a.output);
  const SolveConfig cfg = inspect_solve_config(a);
  auto write_mask = [&](int k, const Image& x) {
    std::ostringstream name;
    name << "mask_" << std::setw(4) << std::setfill('0') << k << ".pgm";
    write_image(fs::path(a.output) / name.str(), channel_mean(solver.mask_at(x, a.sigma)));
  };
  write_mask(0, Image(y.shape()));
  SolveReport report;
  solver.reconstruct(y, a.sigma, cfg, report, nullptr,
                     [&](int k, const Image& x) { write_mask(k, x); });
  std::cout << "masks " << report.outer_iterations + 1 << "\n";
  return report.converged ? kExitOk : kExitNotConverged;
}

int inspect_row(const InspectArgs& a) {
  const DealModel model = load_model(a.model);
  const Image y = read_image(a.input);
  const ForwardOperator h = make_operator(OperatorSpec{}, y.shape());
  const DealSolver solver(model, h);
  if (a.pixel >= y.size()) throw std::out_of_range("--pixel outside the image");
  const SolveConfig cfg = inspect_solve_config(a);
  SolveReport report;
  const Image x = solver.reconstruct(y, a.sigma, cfg, report);
  const Mask m = solver.mask_at(x, a.sigma);
  const Image row = equivalent_row(model, h, m, report.lambda, a.pixel);
  double peak = 0.0;
  for (double v : row.data()) peak = std::max(peak, v);
  write_image(a.output, rescale(row, 0.0, peak > 0.0 ? peak : 1.0));
  if (!a.csv.empty()) {
    std::ofstream out(a.csv);
    if (!out) throw FormatError("cannot write " + a.csv);
    out << "index,value\n" << std::setprecision(17);
    for (std::size_t i = 0; i < row.size(); ++i) out << i << ',' << row[i] << '\n';
  }
  double total = 0.0;
  for (double v : row.data()) total += v;
  std::cout << "row_sum " << fmt(total) << "\n";
  std::cout << "row_dot_y " << fmt(dot(row, y)) << "\n";
  return kExitOk;
}

int run_theory(const InspectArgs& a) {
  const DealModel model = load_model(a.model);
  const Image input = read_image(a.input);
  Measurement y = input;
  OperatorSpec spec;
  if (!a.op.empty()) spec = load_operator_spec(a.op);
  const ForwardOperator h = make_operator(spec, input.shape());
  if (!a.op.empty()) y = h.apply(input);
  TheoryOptions opt;
  opt.contraction_trials = a.trials;
  opt.lemma2_pairs = a.pairs;
  opt.seed = a.seed;
  const double lambda = a.lambda.value_or(model.lambda_for(a.sigma));
  const TheoryReport r = theory_report(model, h, y, a.sigma, lambda, opt);
  const std::string json = r.to_json();
  if (a.output.empty()) {
    std::cout << json << "\n";
  } else {
    std::ofstream out(a.output);
    if (!out) throw FormatError("cannot write " + a.output);
    out << json << "\n";
  }
  return kExitOk;
}

void add_inspect_options(CLI::App& cmd, InspectArgs& a) {
  cmd.add_option("--model", a.model, "Model container")->required()->check(CLI::ExistingFile);
  cmd.add_option("--input", a.input, "Input image")->check(CLI::ExistingFile);
  cmd.add_option("--output", a.output, "Output image, directory or JSON path");
  cmd.add_option("--csv", a.csv, "Numeric export");
  cmd.add_option("--operator", a.op, "Operator spec (theory)")->check(CLI::ExistingFile);
  cmd.add_option("--sigma", a.sigma, "Model noise level")->check(CLI::NonNegativeNumber);
  cmd.add_option("--lambda", a.lambda, "Regularization strength")->check(CLI::NonNegativeNumber);
  cmd.add_option("--pixel", a.pixel, "Flat pixel index (row)");
  cmd.add_option("--grid", a.grid, "Grid size (gram)")->check(CLI::PositiveNumber);
  cmd.add_option("--k-out", a.k_out, "Outer iteration cap")->check(CLI::PositiveNumber);
  cmd.add_option("--eps-out", a.eps_out, "Outer tolerance")->check(CLI::PositiveNumber);
  cmd.add_option("--eps-in", a.eps_in, "CG tolerance")->check(CLI::PositiveNumber);
  cmd.add_option("--seed", a.seed, "Seed for randomized checks");
  cmd.add_option("--trials", a.trials, "Contraction trials (theory)")->check(CLI::PositiveNumber);
  cmd.add_option("--pairs", a.pairs, "Random measurement pairs for the data-stability check (theory)")->check(CLI::NonNegativeNumber);
}

int cmd_inspect(const InspectArgs& a) {
  auto need = [&](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("inspect ") + a.what + " requires " + what);
  };
  if (a.what != "theory") need(!a.output.empty(), "--output");
  if (a.what == "filters") return inspect_filters(a);
  if (a.what == "gram") return inspect_gram(a);
  need(!a.input.empty(), "--input");
  if (a.what == "masks") return inspect_masks(a);
  if (a.what == "row") return inspect_row(a);
  return run_theory(a);
}

struct SynthArgs {
  std::string kind = "piecewise";
  std::string output;
  int size = 64;
  int channels = 1;
  int count = 1;
  std::uint64_t seed = 0;
  std::optional<double> noise;
  int bit_depth = 8;
  std::string mask_output;
  int center = 4;
  double fraction = 0.25;
};

int cmd_synth(const SynthArgs& a) {
  if (a.kind == "fourier-mask") {
    OperatorSpec spec;
    spec.kind = OperatorKind::fourier_mask;
    spec.mask = fourier_row_mask(a.size, a.size, a.center, a.fraction, a.seed);
    std::ofstream out(a.output);
    if (!out) throw FormatError("cannot write " + a.output);
    out << to_json(spec) << "\n";
    return kExitOk;
  }
  auto make = [&](int k) {
    Image img;
    if (a.kind == "piecewise") {
      img = piecewise_constant(a.channels, a.size, a.size, a.seed + k);
    } else if (a.kind == "step") {
      img = step_image(a.size, a.size);
    } else if (a.kind == "phantom") {
      img = phantom(a.size, a.size);
    } else {
      img = Image(Shape{a.channels, a.size, a.size});
    }
    if (a.noise) img = add_noise(img, *a.noise, a.seed + 7 * k + 1);
    return img;
  };
  if (a.count == 1) {
    write_image(a.output, make(0), a.bit_depth);
  } else {
    fs::create_directories(a.output);
    for (int k = 0; k < a.count; ++k) {
      std::ostringstream name;
      name << "img_" << std::setw(4) << std::setfill('0') << k << (a.channels == 3 ? ".ppm" : ".pgm");
      write_image(fs::path(a.output) / name.str(), make(k), a.bit_depth);
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DEAL: deep attentive least squares image reconstruction"};
  app.require_subcommand(1);

  SolveArgs denoise_args;
  auto* denoise = app.add_subcommand("denoise", "Denoise an image");
  add_solve_options(*denoise, denoise_args);

  SolveArgs restore_args;
  auto* restore = app.add_subcommand("restore", "Reconstruct from measurements of a forward operator");
  add_solve_options(*restore, restore_args);
  restore->add_option("--operator", restore_args.op, "Operator spec (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  restore->add_flag("--simulate", restore_args.simulate,
                    "Treat --input as the clean image: apply H, add noise, reconstruct");
  restore->add_option("--size", restore_args.size, "Reconstruction grid HxW");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a model on images or synthetic data");
  auto* data_opt = train_cmd->add_option("--data", train_args.data, "Directory of PGM/PPM images")
                       ->check(CLI::ExistingDirectory);
  train_cmd->add_option("--synthetic", train_args.synthetic, "Number of synthetic images")
      ->excludes(data_opt);
  train_cmd->add_option("--output", train_args.output, "Output model")->required();
  train_cmd->add_option("--csv", train_args.csv, "Training log");
  train_cmd->add_option("--init", train_args.init, "Start from this model")->check(CLI::ExistingFile);
  train_cmd->add_option("--steps", train_args.steps, "Steps of the first phase")
      ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--lr", train_args.lr, "Initial learning rate");
  train_cmd->add_option("--lr-end", train_args.lr_end, "Final learning rate of the first phase");
  train_cmd->add_option("--fine-steps", train_args.fine_steps, "Steps of the second phase");
  train_cmd->add_option("--fine-lr", train_args.fine_lr, "Initial learning rate of the second phase");
  train_cmd->add_option("--fine-lr-end", train_args.fine_lr_end, "Final learning rate");
  train_cmd->add_option("--filters", train_args.filters, "N_C")->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch", train_args.batch, "Batch size")->check(CLI::PositiveNumber);
  train_cmd->add_option("--patch", train_args.patch, "Patch size")->check(CLI::PositiveNumber);
  train_cmd->add_option("--gamma", train_args.gamma, "Loss weight")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--validate-every", train_args.validate_every, "Validation interval");
  train_cmd->add_option("--val-count", train_args.val_count, "Validation images");
  train_cmd->add_option("--seed", train_args.seed, "Seed");
  train_cmd->add_option("--sigma-min", train_args.sigma_min, "Smallest training noise level");
  train_cmd->add_option("--sigma-max", train_args.sigma_max, "Largest training noise level");
  train_cmd->add_option("--k-out-min", train_args.k_out_min, "Smallest outer iteration count");
  train_cmd->add_option("--k-out-max", train_args.k_out_max, "Largest outer iteration count");
  train_cmd->add_option("--eps-m", train_args.eps_m, "Mask floor");

  InspectArgs inspect_args;
  auto* inspect = app.add_subcommand("inspect", "Interpretability exports");
  inspect->add_option("what", inspect_args.what, "filters, gram, masks, row or theory")
      ->required()
      ->check(CLI::IsMember({"filters", "gram", "masks", "row", "theory"}));
  add_inspect_options(*inspect, inspect_args);

  InspectArgs theory_args;
  theory_args.what = "theory";
  auto* theory = app.add_subcommand("theory-report", "Numerical checks of the convergence theory");
  add_inspect_options(*theory, theory_args);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Write synthetic test images or sampling masks");
  synth->add_option("--kind", synth_args.kind, "piecewise, step, phantom, zero or fourier-mask")
      ->check(CLI::IsMember({"piecewise", "step", "phantom", "zero", "fourier-mask"}));
  synth->add_option("--output", synth_args.output, "Output file or directory")->required();
  synth->add_option("--size", synth_args.size, "Image size")->check(CLI::PositiveNumber);
  synth->add_option("--channels", synth_args.channels, "1 or 3")->check(CLI::IsMember({1, 3}));
  synth->add_option("--count", synth_args.count, "Number of images")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_args.seed, "Seed");
  synth->add_option("--noise", synth_args.noise, "Add noise of this level (0-255 scale)");
  synth->add_option("--bit-depth", synth_args.bit_depth, "8 or 16")->check(CLI::IsMember({8, 16}));
  synth->add_option("--center", synth_args.center, "Fully sampled low-frequency rows");
  synth->add_option("--fraction", synth_args.fraction, "Sampling probability of other rows");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitError;
  }

  try {
    if (*denoise) return cmd_denoise(denoise_args);
    if (*restore) return cmd_restore(restore_args);
    if (*train_cmd) return cmd_train(train_args);
    if (*inspect) return cmd_inspect(inspect_args);
    if (*theory) {
      if (theory_args.input.empty()) throw std::invalid_argument("theory-report requires --input");
      return run_theory(theory_args);
    }
    if (*synth) return cmd_synth(synth_args);
  } catch (const SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
