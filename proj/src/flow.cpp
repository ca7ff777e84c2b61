#include "evpose/flow.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "evpose/error.hpp"
#include "evpose/lbfgs.hpp"

namespace evpose {

Sample sample_bilinear(const Image& grid, double x, double y) {
  const Eigen::Index h = grid.rows();
  const Eigen::Index w = grid.cols();
  const double x_max = static_cast<double>(w - 1);
  const double y_max = static_cast<double>(h - 1);
  const bool x_clamped = !(x >= 0.0 && x <= x_max);
  const bool y_clamped = !(y >= 0.0 && y <= y_max);
  const double xc = std::clamp(x, 0.0, x_max);
  const double yc = std::clamp(y, 0.0, y_max);

  Eigen::Index x0 = static_cast<Eigen::Index>(std::floor(xc));
  Eigen::Index y0 = static_cast<Eigen::Index>(std::floor(yc));
  if (x0 >= w - 1) x0 = std::max<Eigen::Index>(w - 2, 0);
  if (y0 >= h - 1) y0 = std::max<Eigen::Index>(h - 2, 0);
  const Eigen::Index x1 = std::min(x0 + 1, w - 1);
  const Eigen::Index y1 = std::min(y0 + 1, h - 1);
  const double fx = xc - static_cast<double>(x0);
  const double fy = yc - static_cast<double>(y0);

  const double g00 = grid(y0, x0), g01 = grid(y0, x1), g10 = grid(y1, x0), g11 = grid(y1, x1);
  Sample s;
  s.value = (1.0 - fy) * ((1.0 - fx) * g00 + fx * g01) + fy * ((1.0 - fx) * g10 + fx * g11);
  if (!x_clamped && x1 != x0) s.dx = (1.0 - fy) * (g01 - g00) + fy * (g11 - g10);
  if (!y_clamped && y1 != y0) s.dy = (1.0 - fx) * (g10 - g00) + fx * (g11 - g01);
  return s;
}

Eigen::MatrixXd bilinear_sample(std::span<const Image> channels, const Points2& points) {
  Eigen::MatrixXd out(points.rows(), static_cast<Eigen::Index>(channels.size()));
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    for (std::size_t c = 0; c < channels.size(); ++c)
      out(i, static_cast<Eigen::Index>(c)) = sample_bilinear(channels[c], points(i, 0), points(i, 1)).value;
  return out;
}

Eigen::VectorXd bilinear_sample(const Image& grid, const Points2& points) {
  return bilinear_sample(std::span<const Image>(&grid, 1), points).col(0);
}

Image warp(const Image& second, const FlowField& flow) {
  Image out(second.rows(), second.cols());
  for (Eigen::Index y = 0; y < second.rows(); ++y)
    for (Eigen::Index x = 0; x < second.cols(); ++x)
      out(y, x) = sample_bilinear(second, static_cast<double>(x) + flow.u(y, x),
                                  static_cast<double>(y) + flow.v(y, x)).value;
  return out;
}

namespace {

void require_same_raster(const Image& a, const Image& b, const FlowField& flow) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || flow.height() != a.rows() || flow.width() != a.cols())
    throw Error(Errc::DimensionMismatch, "images and flow must share one raster");
}

// Adds the smoothness terms of one ordered pair in both directions.
double smooth_pair(const FlowField& flow, Eigen::Index y0, Eigen::Index x0, Eigen::Index y1, Eigen::Index x1,
                   double eps, FlowField* grad, double scale) {
  const double du = flow.u(y0, x0) - flow.u(y1, x1);
  const double dv = flow.v(y0, x0) - flow.v(y1, x1);
  if (grad) {
    const double gu = 2.0 * scale * charbonnier_derivative(du, eps);
    const double gv = 2.0 * scale * charbonnier_derivative(dv, eps);
    grad->u(y0, x0) += gu;
    grad->u(y1, x1) -= gu;
    grad->v(y0, x0) += gv;
    grad->v(y1, x1) -= gv;
  }
  return 2.0 * (charbonnier(du, eps) + charbonnier(dv, eps));
}

}  // namespace

double photometric_loss(const Image& first, const Image& second, const FlowField& flow, double eps) {
  return flow_objective(first, second, flow, eps, 0.0).photometric;
}

double smoothness_loss(const FlowField& flow, double eps) {
  double total = 0.0;
  const Eigen::Index h = flow.height(), w = flow.width();
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      if (x + 1 < w) total += smooth_pair(flow, y, x, y, x + 1, eps, nullptr, 0.0);
      if (y + 1 < h) total += smooth_pair(flow, y, x, y + 1, x, eps, nullptr, 0.0);
    }
  return total;
}

FlowObjective flow_objective(const Image& first, const Image& second, const FlowField& flow, double eps,
                             double lambda_smooth, FlowField* gradient) {
  require_same_raster(first, second, flow);
  const Eigen::Index h = first.rows(), w = first.cols();
  if (gradient) *gradient = FlowField(static_cast<int>(h), static_cast<int>(w));

  FlowObjective obj;
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      const Sample s = sample_bilinear(second, static_cast<double>(x) + flow.u(y, x),
                                       static_cast<double>(y) + flow.v(y, x));
      const double r = first(y, x) - s.value;
      obj.photometric += charbonnier(r, eps);
      if (gradient) {
        const double dr = charbonnier_derivative(r, eps);
        gradient->u(y, x) -= dr * s.dx;
        gradient->v(y, x) -= dr * s.dy;
      }
    }
  if (lambda_smooth != 0.0) {
    for (Eigen::Index y = 0; y < h; ++y)
      for (Eigen::Index x = 0; x < w; ++x) {
        if (x + 1 < w) obj.smoothness += smooth_pair(flow, y, x, y, x + 1, eps, gradient, lambda_smooth);
        if (y + 1 < h) obj.smoothness += smooth_pair(flow, y, x, y + 1, x, eps, gradient, lambda_smooth);
      }
  }
  obj.total = obj.photometric + lambda_smooth * obj.smoothness;
  return obj;
}

Image downsample(const Image& image) {
  const Eigen::Index h = image.rows() / 2, w = image.cols() / 2;
  Image out(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x)
      out(y, x) = 0.25 * (image(2 * y, 2 * x) + image(2 * y, 2 * x + 1) + image(2 * y + 1, 2 * x) +
                          image(2 * y + 1, 2 * x + 1));
  return out;
}

namespace {

// Coarse pixel i covers fine pixels 2i and 2i+1, so fine x maps to (x - 0.5) / 2.
FlowField upsample_flow(const FlowField& coarse, int height, int width) {
  FlowField fine(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double cx = (x - 0.5) / 2.0, cy = (y - 0.5) / 2.0;
      fine.u(y, x) = 2.0 * sample_bilinear(coarse.u, cx, cy).value;
      fine.v(y, x) = 2.0 * sample_bilinear(coarse.v, cx, cy).value;
    }
  return fine;
}

Eigen::VectorXd flatten(const FlowField& f) {
  Eigen::VectorXd x(2 * f.u.size());
  x << f.u.reshaped<Eigen::RowMajor>(), f.v.reshaped<Eigen::RowMajor>();
  return x;
}

FlowField unflatten(const Eigen::VectorXd& x, int h, int w) {
  FlowField f(h, w);
  const Eigen::Index n = static_cast<Eigen::Index>(h) * w;
  f.u.reshaped<Eigen::RowMajor>() = x.head(n);
  f.v.reshaped<Eigen::RowMajor>() = x.tail(n);
  return f;
}

void descend_level(const Image& first, const Image& second, const FlowSolverConfig& cfg, int level,
                   FlowField& flow, std::vector<FlowTraceEntry>& trace) {
  const int h = flow.height(), w = flow.width();
  Eigen::VectorXd cached_x;
  Eigen::VectorXd cached_grad;
  auto value = [&](const Eigen::VectorXd& x) {
    FlowField grad;
    const double e = flow_objective(first, second, unflatten(x, h, w), cfg.eps, cfg.lambda_smooth, &grad).total;
    cached_x = x;
    cached_grad = flatten(grad);
    return std::isfinite(e) ? e : std::numeric_limits<double>::infinity();
  };
  auto gradient = [&](const Eigen::VectorXd& x) {
    if (cached_x.size() != x.size() || cached_x != x) value(x);
    return cached_grad;
  };

  Eigen::VectorXd x = flatten(flow);
  const double start = value(x);
  if (!std::isfinite(start)) throw Error(Errc::NonFiniteObjective, "flow objective is not finite");
  trace.push_back({level, 0, start});

  LbfgsOptions opt;
  opt.max_iters = cfg.iterations;
  opt.first_step = cfg.step;
  opt.tolerance = cfg.tolerance;
  lbfgs_minimize(x, value, gradient, opt, [&](int it, double e) { trace.push_back({level, it, e}); });
  flow = unflatten(x, h, w);
}

}  // namespace

FlowSolution solve_flow(const Image& first, const Image& second, const FlowSolverConfig& config) {
  if (first.rows() != second.rows() || first.cols() != second.cols())
    throw Error(Errc::DimensionMismatch, "image pair rasters differ");
  if (config.iterations < 1) throw Error(Errc::ConfigError, "solver needs at least one iteration");
  if (config.eps <= 0.0) throw Error(Errc::ConfigError, "Charbonnier eps must be positive");

  std::vector<Image> firsts{first}, seconds{second};
  for (int l = 1; l < config.pyramid_levels; ++l) {
    if (firsts.back().rows() < 16 || firsts.back().cols() < 16) break;
    firsts.push_back(downsample(firsts.back()));
    seconds.push_back(downsample(seconds.back()));
  }

  FlowSolution solution;
  FlowField flow;
  for (int level = static_cast<int>(firsts.size()) - 1; level >= 0; --level) {
    const Image& a = firsts[level];
    const Image& b = seconds[level];
    const int h = static_cast<int>(a.rows()), w = static_cast<int>(a.cols());
    FlowField zero(h, w);
    if (flow.height() == 0) {
      flow = zero;
    } else {
      flow = upsample_flow(flow, h, w);
      const double e_init = flow_objective(a, b, flow, config.eps, config.lambda_smooth).total;
      const double e_zero = flow_objective(a, b, zero, config.eps, config.lambda_smooth).total;
      if (!(e_init <= e_zero)) flow = zero;
    }
    descend_level(a, b, config, level, flow, solution.trace);
  }
  solution.flow = std::move(flow);
  return solution;
}

Image pseudo_intensity(const EventFrame& frame) {
  Image out = Image::Zero(frame.height(), frame.width());
  for (int c = 0; c < frame.channels(); ++c) out += frame.channel(c);
  const double peak = out.cwiseAbs().maxCoeff();
  if (peak > 0.0) out /= peak;
  return out;
}

FlowSolution flow_from_events(const EventFrame& previous, const EventFrame& current, const FlowSolverConfig& config) {
  return solve_flow(pseudo_intensity(previous), pseudo_intensity(current), config);
}

void write_flow(const std::filesystem::path& bin_path, const FlowField& flow) {
  std::vector<float> buf;
  buf.reserve(static_cast<std::size_t>(flow.u.size()) * 2);
  for (const Image* plane : {&flow.u, &flow.v})
    for (Eigen::Index y = 0; y < plane->rows(); ++y)
      for (Eigen::Index x = 0; x < plane->cols(); ++x) buf.push_back(static_cast<float>((*plane)(y, x)));
  std::ofstream out(bin_path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot write " + bin_path.string());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  std::ofstream side(sidecar_path(bin_path), std::ios::trunc);
  nlohmann::ordered_json meta = {{"height", flow.height()}, {"width", flow.width()}};
  side << meta.dump(2) << "\n";
}

FlowField read_flow(const std::filesystem::path& bin_path) {
  std::ifstream side(sidecar_path(bin_path));
  if (!side) throw Error(Errc::IoError, "missing sidecar for " + bin_path.string());
  nlohmann::json meta;
  try {
    side >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::SchemaViolation, std::string("flow sidecar: ") + e.what());
  }
  if (!meta.contains("height") || !meta.contains("width")) throw Error(Errc::SchemaViolation, "flow sidecar fields");
  const int h = meta["height"].get<int>(), w = meta["width"].get<int>();
  std::ifstream in(bin_path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + bin_path.string());
  std::vector<char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (bytes.size() != static_cast<std::size_t>(h) * w * 2 * sizeof(float))
    throw Error(Errc::SchemaViolation, "flow payload size does not match its sidecar");
  FlowField flow(h, w);
  const float* p = reinterpret_cast<const float*>(bytes.data());
  for (Image* plane : {&flow.u, &flow.v})
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) (*plane)(y, x) = *p++;
  return flow;
}

}  // namespace evpose
