#include "lipemo/scorers.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "lipemo/errors.hpp"
#include "lipemo/face_layout.hpp"
#include "lipemo/frame_tensor.hpp"
#include "lipemo/ops.hpp"

namespace lipemo {

namespace L = layout;

int EmotionLogits::argmax() const {
  return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

double SyncEmbeddingPair::cosine() const {
  double dot = 0, a = 0, b = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    dot += v[i] * s[i];
    a += v[i] * v[i];
    b += s[i] * s[i];
  }
  return dot / std::max(std::sqrt(a * b), 1e-12);
}

namespace {

constexpr int kEmotionClasses = 3;
constexpr double kLumR = 0.299, kLumG = 0.587, kLumB = 0.114;

// Raw-grey levels the estimator is calibrated against.
constexpr double kSkinLow0 = 0.40, kSkinLow1 = 0.48;
constexpr double kSkinHigh1 = 0.78, kSkinHigh0 = 0.84;
constexpr double kDarkLevel = 0.166;  // lip luminance
constexpr double kMinSkinFraction = 0.12;
constexpr double kRowThreshold = 0.3;

// Measurement windows in face units.
constexpr double kMouthWinTop = 0.05, kMouthWinBottom = 0.85, kMouthWinHalf = 0.55;
constexpr double kBrowWinTop = -0.85, kBrowWinBottom = -0.33, kBrowWinHalf = 0.75;

struct PixelGrad {
  int index;       // pixel offset within the plane
  double dcurve;   // d(curve)/d(grey)
  double dbrow;
  double dopen;
};

struct FrameFit {
  FaceMeasurement m;
  std::vector<PixelGrad> grads;
};

double ramp(double x, double x0, double x1) { return std::clamp((x - x0) / (x1 - x0), 0.0, 1.0); }

FrameFit fit_frame(const real* r, const real* g, const real* b, int h, int w, const NormStats& norm) {
  FrameFit out;
  const int n = h * w;
  std::vector<double> grey(n);
  double mean = 0;
  for (int i = 0; i < n; ++i) {
    grey[i] = kLumR * r[i] + kLumG * g[i] + kLumB * b[i];
    mean += grey[i];
  }
  mean /= n;
  double var = 0;
  for (double v : grey) var += (v - mean) * (v - mean);
  if (std::sqrt(var / n) < 1e-6) return out;  // not normalizable

  // Normalized grey; thresholds are mapped into the same space.
  const double mu = norm.grey_mean, sigma = norm.grey_std;
  auto to_norm = [mu, sigma](double v) { return (v - mu) / sigma; };
  std::vector<double> ng(n);
  for (int i = 0; i < n; ++i) ng[i] = to_norm(grey[i]);

  const double s_l0 = to_norm(kSkinLow0), s_l1 = to_norm(kSkinLow1);
  const double s_h1 = to_norm(kSkinHigh1), s_h0 = to_norm(kSkinHigh0);
  std::vector<double> skin(n);
  double skin_total = 0, sx = 0;
  std::vector<double> rows(h, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int i = y * w + x;
      const double s = ramp(ng[i], s_l0, s_l1) * (1.0 - ramp(ng[i], s_h1, s_h0));
      skin[i] = s;
      skin_total += s;
      sx += s * (x + 0.5);
      rows[y] += s;
    }
  if (skin_total < kMinSkinFraction * n) return out;

  const double cx = sx / skin_total;
  const double rmax = *std::max_element(rows.begin(), rows.end());
  const double thr = kRowThreshold * rmax;
  int yt = 0;
  while (yt < h && rows[yt] < thr) ++yt;
  int yb = h - 1;
  while (yb >= 0 && rows[yb] < thr) --yb;
  if (yt >= yb) return out;
  const double top =
      yt == 0 ? 0.0 : (yt - 0.5) + (thr - rows[yt - 1]) / std::max(rows[yt] - rows[yt - 1], 1e-12);
  const double bottom = yb == h - 1 ? h : (yb + 0.5) + (rows[yb] - thr) /
                                                          std::max(rows[yb] - rows[yb + 1], 1e-12);
  const double ry = (bottom - top) / (2.0 * std::sqrt(1.0 - kRowThreshold * kRowThreshold));
  const double cy = 0.5 * (top + bottom);
  const double nominal_ry = L::kFaceRadiusY * h;
  if (ry < 0.6 * nominal_ry || ry > 1.4 * nominal_ry) return out;
  const double rx = ry * (L::kFaceRadiusX * w) / (L::kFaceRadiusY * h);

  // Reference skin level: median over fully-skin pixels, robust to the
  // blended pixels at the face edge and around features.
  std::vector<double> skin_px;
  for (int i = 0; i < n; ++i)
    if (skin[i] >= 0.999) skin_px.push_back(ng[i]);
  if (skin_px.empty()) return out;
  auto mid = skin_px.begin() + skin_px.size() / 2;
  std::nth_element(skin_px.begin(), mid, skin_px.end());
  const double skin_ref = *mid;
  const double dark_ref = to_norm(kDarkLevel);
  const double span = skin_ref - dark_ref;
  if (span <= 1e-6) return out;

  struct Sample {
    int index;
    double d;
    bool active;  // darkness strictly inside its clamp range
    double u, v;
  };
  std::vector<Sample> mouth, brow;
  const int x_lo = std::max(0, static_cast<int>(std::floor(cx - kBrowWinHalf * rx)) - 1);
  const int x_hi = std::min(w - 1, static_cast<int>(std::ceil(cx + kBrowWinHalf * rx)) + 1);
  for (int y = 0; y < h; ++y) {
    const double v = (y + 0.5 - cy) / ry;
    const bool in_mouth_rows = v >= kMouthWinTop && v <= kMouthWinBottom;
    const bool in_brow_rows = v >= kBrowWinTop && v <= kBrowWinBottom;
    if (!in_mouth_rows && !in_brow_rows) continue;
    for (int x = x_lo; x <= x_hi; ++x) {
      const double u = (x + 0.5 - cx) / rx;
      const int i = y * w + x;
      const double raw = (skin_ref - ng[i]) / span;
      const double d = std::clamp(raw, 0.0, 1.0);
      const bool active = raw > 0.0 && raw < 1.0;
      if (d <= 0.0 && !active) continue;
      if (in_mouth_rows && std::abs(u) <= kMouthWinHalf) mouth.push_back({i, d, active, u, v});
      if (in_brow_rows && std::abs(u) <= kBrowWinHalf) brow.push_back({i, d, active, u, v});
    }
  }

  const double face_area = rx * ry;  // pixels per unit face area
  double mouth_mass = 0, brow_mass = 0;
  for (const auto& s : mouth) mouth_mass += s.d;
  for (const auto& s : brow) brow_mass += s.d;
  if (mouth_mass < 0.03 * face_area || brow_mass < 0.02 * face_area) return out;

  // Mouth centre-line: weighted least squares v = c0 + c1 t + c2 t^2.
  Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
  Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
  for (const auto& s : mouth) {
    const double t = s.u / L::kMouthHalfWidth;
    const Eigen::Vector3d phi(1.0, t, t * t);
    A += s.d * phi * phi.transpose();
    rhs += s.d * s.v * phi;
  }
  Eigen::FullPivLU<Eigen::Matrix3d> lu(A);
  if (!lu.isInvertible() || std::abs(A.determinant()) < 1e-12) return out;
  const Eigen::Vector3d c = lu.solve(rhs);
  const Eigen::Matrix3d Ainv = lu.inverse();

  double brow_centroid = 0;
  for (const auto& s : brow) brow_centroid += s.d * s.v;
  brow_centroid /= brow_mass;

  // Mouth area in face units: 2 * half-width * (2 * lip + 4/3 * opening).
  const double area = mouth_mass / face_area;
  const double area_scale = 2.0 * L::kMouthHalfWidth;
  out.m.found = true;
  out.m.mouth_curve = -c(2) / L::kCurveLift;
  out.m.brow_angle = (L::kBrowCenterY - brow_centroid) / L::kBrowShift;
  out.m.mouth_open =
      ((area / area_scale - 2.0 * L::kLipHalfThickness) * 0.75 - L::kOpenBase) / L::kOpenGain;

  // d(darkness)/d(normalized grey) = -1/span; d(normalized grey)/d(grey) = 1/sigma.
  const double dd_dgrey = -1.0 / (span * sigma);
  for (const auto& s : mouth) {
    if (!s.active) continue;
    const double t = s.u / L::kMouthHalfWidth;
    const Eigen::Vector3d phi(1.0, t, t * t);
    const Eigen::Vector3d dc = Ainv * phi * (s.v - phi.dot(c));
    out.grads.push_back({s.index, -dc(2) / L::kCurveLift * dd_dgrey, 0.0,
                         0.75 / (area_scale * face_area * L::kOpenGain) * dd_dgrey});
  }
  for (const auto& s : brow) {
    if (!s.active) continue;
    const double dcentroid = (s.v - brow_centroid) / brow_mass;
    out.grads.push_back({s.index, 0.0, -dcentroid / L::kBrowShift * dd_dgrey, 0.0});
  }
  return out;
}

}  // namespace

Tensor measure_faces(const Tensor& frames, const NormStats& norm, std::vector<bool>& found) {
  if (frames.rank() != 4 || frames.dim(1) != 3)
    throw InvalidInput("measure_faces: need [N, 3, H, W], got " + shape_str(frames.shape()));
  const int n = frames.dim(0), h = frames.dim(2), w = frames.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<FrameFit> fits(n);
  const real* base = frames.values().data();
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    const real* f = base + static_cast<std::size_t>(i) * 3 * plane;
    fits[i] = fit_frame(f, f + plane, f + 2 * plane, h, w, norm);
  }
  found.assign(n, false);
  std::vector<real> out(static_cast<std::size_t>(n) * 3, real(0));
  for (int i = 0; i < n; ++i) {
    if (!fits[i].m.found) continue;
    found[i] = true;
    out[i * 3 + 0] = static_cast<real>(fits[i].m.mouth_curve);
    out[i * 3 + 1] = static_cast<real>(fits[i].m.brow_angle);
    out[i * 3 + 2] = static_cast<real>(fits[i].m.mouth_open);
  }
  auto grads = std::make_shared<std::vector<FrameFit>>(std::move(fits));
  return detail::make_op({n, 3}, std::move(out), {frames}, [grads, plane](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < grads->size(); ++i) {
      const FrameFit& fit = (*grads)[i];
      if (!fit.m.found) continue;
      const double gc = self.grad[i * 3], gb = self.grad[i * 3 + 1], go = self.grad[i * 3 + 2];
      real* dst = p.grad.data() + i * 3 * plane;
      for (const auto& pg : fit.grads) {
        const double dgrey = gc * pg.dcurve + gb * pg.dbrow + go * pg.dopen;
        dst[pg.index] += static_cast<real>(kLumR * dgrey);
        dst[plane + pg.index] += static_cast<real>(kLumG * dgrey);
        dst[2 * plane + pg.index] += static_cast<real>(kLumB * dgrey);
      }
    }
  });
}

FaceMeasurement measure_face(const FrameStack& frame, const NormStats& norm) {
  if (frame.count != 1 || frame.channels != 3) throw InvalidInput("measure_face: need one RGB frame");
  NoGradGuard guard;
  std::vector<bool> found;
  Tensor m = measure_faces(to_tensor(frame), norm, found);
  FaceMeasurement out;
  out.found = found[0];
  out.mouth_curve = m[0];
  out.brow_angle = m[1];
  out.mouth_open = m[2];
  return out;
}

namespace {

Tensor expression_score(const Tensor& meas, const AnalyticConfig& cfg) {
  Tensor wx({1, 3}, {static_cast<real>(cfg.valence_curve), static_cast<real>(cfg.valence_brow), 0});
  return ops::linear(meas, wx, Tensor());  // [N, 1]
}

}  // namespace

Tensor AnalyticEmotionScorer::logits(const Tensor& frames, std::vector<bool>& found) const {
  Tensor x = expression_score(measure_faces(frames, norm_, found), cfg_);
  const real g = static_cast<real>(cfg_.logit_gain);
  const real m = static_cast<real>(cfg_.logit_gain * cfg_.logit_margin);
  Tensor w({3, 1}, {g, 0, -g});
  Tensor b({3}, {-m, 0, -m});
  return ops::linear(x, w, b);
}

Tensor AnalyticAffectScorer::affect(const Tensor& frames, std::vector<bool>& found) const {
  Tensor meas = measure_faces(frames, norm_, found);
  const int n = meas.dim(0);
  Tensor valence = ops::clamp(expression_score(meas, cfg_), -1.0, 1.0);
  Tensor curve = ops::abs(ops::select_col(meas, 0));
  Tensor open = ops::select_col(meas, 2);
  Tensor arousal = ops::add_scalar(
      ops::add(ops::scale(curve, cfg_.arousal_curve), ops::scale(open, cfg_.arousal_open)),
      cfg_.arousal_base);
  arousal = ops::reshape(ops::clamp(arousal, 0.0, 1.0), {n, 1});
  return ops::concat({valence, arousal}, 1);
}

namespace {

// [dim, cols] with orthonormal columns.
Tensor orthonormal_projection(int dim, int cols, std::uint64_t seed) {
  if (dim < cols) throw InvalidInput("sync embedding dim smaller than window + 1");
  Rng rng(seed);
  Eigen::MatrixXd m(dim, cols);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dim, cols);
  std::vector<real> v(static_cast<std::size_t>(dim) * cols);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < cols; ++j) v[i * cols + j] = static_cast<real>(q(i, j));
  return Tensor({dim, cols}, std::move(v));
}

Tensor centering(int t) {
  std::vector<real> v(static_cast<std::size_t>(t) * t);
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < t; ++j) v[i * t + j] = static_cast<real>((i == j ? 1.0 : 0.0) - 1.0 / t);
  return Tensor({t, t}, std::move(v));
}

void check_sync_shapes(const Tensor& frames, const Tensor& audio, int window) {
  if (window <= 0 || frames.rank() != 4 || audio.rank() != 4 || frames.dim(0) % window != 0 ||
      frames.dim(0) / window != audio.dim(0) || audio.dim(1) != 1 || audio.dim(2) % window != 0)
    throw InvalidInput("sync embed: frames " + shape_str(frames.shape()) + " / audio " +
                       shape_str(audio.shape()) + " do not match window " +
                       std::to_string(window));
}

}  // namespace

std::pair<Tensor, Tensor> AnalyticSyncScorer::embed(const Tensor& frames, const Tensor& audio,
                                                    int window, std::vector<bool>& valid) const {
  check_sync_shapes(frames, audio, window);
  const int n = audio.dim(0), steps = audio.dim(2), bands = audio.dim(3);
  const int spf = steps / window;
  std::vector<bool> found;
  Tensor open = ops::select_col(measure_faces(frames, norm_, found), 2);
  valid.assign(n, true);
  for (int i = 0; i < n * window; ++i)
    if (!found[i]) valid[i / window] = false;

  std::vector<real> env(static_cast<std::size_t>(n) * window);
  auto av = audio.values();
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < window; ++t) {
      double acc = 0;
      for (int j = 0; j < spf; ++j)
        for (int b = 0; b < bands; ++b)
          acc += av[(static_cast<std::size_t>(i) * steps + t * spf + j) * bands + b];
      env[i * window + t] = static_cast<real>(acc / (spf * bands));
    }

  const Tensor center = centering(window);
  const Tensor proj = orthonormal_projection(cfg_.sync_dim, window + 1, cfg_.sync_seed);
  const Tensor level(Shape{n, 1}, static_cast<real>(cfg_.sync_level));
  auto encode = [&](const Tensor& traj) {
    Tensor centred = ops::linear(traj, center, Tensor());
    return ops::linear(ops::concat({centred, level}, 1), proj, Tensor());
  };
  return {encode(ops::reshape(open, {n, window})), encode(Tensor({n, window}, std::move(env)))};
}

GreyConvNet::GreyConvNet(int in_ch, int outputs, NormStats norm, std::uint64_t seed)
    : norm_(norm), in_ch_(in_ch) {
  Rng rng(seed);
  c1_ = Conv2d(in_ch, 8, 3, 2, rng);
  c2_ = Conv2d(8, 16, 3, 2, rng);
  c3_ = Conv2d(16, 32, 3, 2, rng);
  head_ = Linear(32, outputs, rng);
}

Tensor GreyConvNet::operator()(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != 3 * in_ch_) throw InvalidInput("GreyConvNet: bad input shape");
  // Greyscale + normalization as a fixed 1x1 convolution.
  std::vector<real> w(static_cast<std::size_t>(in_ch_) * 3 * in_ch_, real(0));
  const double inv = 1.0 / norm_.grey_std;
  for (int k = 0; k < in_ch_; ++k) {
    w[(k * 3 * in_ch_) + 3 * k + 0] = static_cast<real>(kLumR * inv);
    w[(k * 3 * in_ch_) + 3 * k + 1] = static_cast<real>(kLumG * inv);
    w[(k * 3 * in_ch_) + 3 * k + 2] = static_cast<real>(kLumB * inv);
  }
  Tensor grey_w({in_ch_, 3 * in_ch_, 1, 1}, std::move(w));
  Tensor grey_b({in_ch_}, std::vector<real>(in_ch_, static_cast<real>(-norm_.grey_mean * inv)));
  Tensor h = ops::conv2d(x, grey_w, grey_b, 1, 0);
  h = ops::leaky_relu(c1_(h), 0.2);
  h = ops::leaky_relu(c2_(h), 0.2);
  h = ops::leaky_relu(c3_(h), 0.2);
  return head_(ops::global_avg_pool(h));
}

ParameterList GreyConvNet::parameters() const {
  ParameterList p;
  c1_.collect(p, "c1");
  c2_.collect(p, "c2");
  c3_.collect(p, "c3");
  head_.collect(p, "head");
  return p;
}

namespace {

bool frame_is_constant(const real* f, std::size_t n) {
  double mean = 0;
  for (std::size_t i = 0; i < n; ++i) mean += f[i];
  mean /= static_cast<double>(n);
  double var = 0;
  for (std::size_t i = 0; i < n; ++i) var += (f[i] - mean) * (f[i] - mean);
  return std::sqrt(var / static_cast<double>(n)) < 1e-6;
}

std::vector<bool> nonconstant_frames(const Tensor& frames) {
  const int n = frames.dim(0);
  const std::size_t sz = frames.size() / static_cast<std::size_t>(n);
  std::vector<bool> ok(n);
  for (int i = 0; i < n; ++i) ok[i] = !frame_is_constant(frames.values().data() + i * sz, sz);
  return ok;
}

// Gathers rows `idx` of a batch tensor.
Tensor gather_rows(const Tensor& t, const std::vector<int>& idx) {
  std::vector<Tensor> parts;
  parts.reserve(idx.size());
  for (int i : idx) parts.push_back(ops::slice(t, i, i + 1));
  return ops::concat(parts, 0);
}

template <class LossFn>
double run_fit(ParameterList params, int count, const ScorerFitOptions& opts, LossFn loss_fn) {
  if (count <= 0) throw InvalidInput("scorer fit: no samples");
  params.set_requires_grad(true);
  Adam adam(params, {opts.lr, 0.9, 0.999, 1e-8});
  Rng rng(opts.seed);
  double last = 0;
  for (int step = 0; step < opts.steps; ++step) {
    std::vector<int> idx(std::min(opts.batch, count));
    for (auto& i : idx) i = rng.below(count);
    params.zero_grad();
    Tensor loss = loss_fn(idx);
    loss.backward();
    adam.step(params);
    last = loss.item();
  }
  params.zero_grad();
  params.set_requires_grad(false);
  return last;
}

}  // namespace

LearnedEmotionScorer::LearnedEmotionScorer(NormStats norm, std::uint64_t seed)
    : net_(1, kEmotionClasses, norm, seed) {
  net_.parameters().set_requires_grad(false);
}

Tensor LearnedEmotionScorer::logits(const Tensor& frames, std::vector<bool>& found) const {
  found = nonconstant_frames(frames);
  return net_(frames);
}

std::uint64_t LearnedEmotionScorer::fingerprint() const { return lipemo::fingerprint(net_.parameters()); }

double LearnedEmotionScorer::fit(const Tensor& frames, const std::vector<int>& labels,
                                 const ScorerFitOptions& opts) {
  if (static_cast<int>(labels.size()) != frames.dim(0)) throw InvalidInput("fit: label count");
  return run_fit(net_.parameters(), frames.dim(0), opts, [&](const std::vector<int>& idx) {
    Tensor probs = ops::softmax_rows(net_(gather_rows(frames, idx)));
    std::vector<real> onehot(idx.size() * kEmotionClasses, real(0));
    for (std::size_t k = 0; k < idx.size(); ++k) onehot[k * kEmotionClasses + labels[idx[k]]] = 1;
    Tensor picked = ops::mul(probs, Tensor(probs.shape(), std::move(onehot)));
    Tensor p = ops::clamp(ops::mean_groups(picked, kEmotionClasses), 1e-7, 1.0);
    return ops::scale(ops::mean(ops::log(ops::scale(p, kEmotionClasses))), -1.0);
  });
}

LearnedAffectScorer::LearnedAffectScorer(NormStats norm, std::uint64_t seed)
    : net_(1, 2, norm, seed) {
  net_.parameters().set_requires_grad(false);
}

Tensor LearnedAffectScorer::affect(const Tensor& frames, std::vector<bool>& found) const {
  found = nonconstant_frames(frames);
  Tensor raw = net_(frames);
  const int n = raw.dim(0);
  Tensor valence = ops::reshape(ops::tanh(ops::select_col(raw, 0)), {n, 1});
  Tensor arousal = ops::reshape(ops::sigmoid(ops::select_col(raw, 1)), {n, 1});
  return ops::concat({valence, arousal}, 1);
}

std::uint64_t LearnedAffectScorer::fingerprint() const { return lipemo::fingerprint(net_.parameters()); }

double LearnedAffectScorer::fit(const Tensor& frames, const Tensor& targets,
                                const ScorerFitOptions& opts) {
  if (targets.rank() != 2 || targets.dim(0) != frames.dim(0) || targets.dim(1) != 2)
    throw InvalidInput("fit: targets must be [N, 2]");
  return run_fit(net_.parameters(), frames.dim(0), opts, [&](const std::vector<int>& idx) {
    std::vector<bool> found;
    Tensor pred = affect(gather_rows(frames, idx), found);
    Tensor diff = ops::sub(pred, gather_rows(targets, idx));
    return ops::mean(ops::mul(diff, diff));
  });
}

LearnedSyncScorer::LearnedSyncScorer(NormStats norm, int window, int steps_per_frame, int bands,
                                     int dim, std::uint64_t seed)
    : window_(window), video_(window, dim, norm, seed) {
  (void)steps_per_frame;
  (void)bands;
  Rng rng(mix_seed({seed, 0xA5}));
  a1_ = Conv2d(1, 8, 3, 1, rng);
  a2_ = Conv2d(8, 16, 3, 2, rng);
  a3_ = Conv2d(16, 32, 3, 2, rng);
  a_head_ = Linear(32, dim, rng);
  parameters().set_requires_grad(false);
}

ParameterList LearnedSyncScorer::parameters() const {
  ParameterList p;
  p.append(video_.parameters(), "video.");
  a1_.collect(p, "audio.c1");
  a2_.collect(p, "audio.c2");
  a3_.collect(p, "audio.c3");
  a_head_.collect(p, "audio.head");
  return p;
}

std::uint64_t LearnedSyncScorer::fingerprint() const { return lipemo::fingerprint(parameters()); }

std::pair<Tensor, Tensor> LearnedSyncScorer::embed(const Tensor& frames, const Tensor& audio,
                                                   int window, std::vector<bool>& valid) const {
  check_sync_shapes(frames, audio, window);
  if (window != window_) throw InvalidInput("learned sync scorer built for another window");
  const int n = audio.dim(0), h = frames.dim(2), w = frames.dim(3);
  std::vector<bool> ok = nonconstant_frames(frames);
  valid.assign(n, true);
  for (int i = 0; i < n * window; ++i)
    if (!ok[i]) valid[i / window] = false;
  // Stack the window's frames along channels: [N, 3T, H, W].
  Tensor stacked = ops::reshape(frames, {n, 3 * window, h, w});
  Tensor v = video_(stacked);
  Tensor a = ops::leaky_relu(a1_(audio), 0.2);
  a = ops::leaky_relu(a2_(a), 0.2);
  a = ops::leaky_relu(a3_(a), 0.2);
  return {v, a_head_(ops::global_avg_pool(a))};
}

double LearnedSyncScorer::fit(const Tensor& frames, const Tensor& audio,
                              const std::vector<int>& labels, const ScorerFitOptions& opts) {
  const int n = audio.dim(0);
  if (static_cast<int>(labels.size()) != n) throw InvalidInput("fit: label count");
  return run_fit(parameters(), n, opts, [&](const std::vector<int>& idx) {
    std::vector<int> frame_idx;
    for (int i : idx)
      for (int t = 0; t < window_; ++t) frame_idx.push_back(i * window_ + t);
    std::vector<bool> valid;
    auto [v, s] = embed(gather_rows(frames, frame_idx), gather_rows(audio, idx), window_, valid);
    Tensor p = ops::clamp(ops::cosine_rows(v, s, 1e-8), 1e-7, 1.0 - 1e-7);
    std::vector<real> y(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) y[k] = static_cast<real>(labels[idx[k]]);
    Tensor yt({static_cast<int>(idx.size())}, y);
    Tensor one_minus_y = ops::add_scalar(ops::scale(yt, -1.0), 1.0);
    Tensor ll = ops::add(ops::mul(yt, ops::log(p)),
                         ops::mul(one_minus_y, ops::log(ops::add_scalar(ops::scale(p, -1.0), 1.0))));
    return ops::scale(ops::mean(ll), -1.0);
  });
}

ScorerSet analytic_scorers(const NormStats& norm, const AnalyticConfig& cfg) {
  return {std::make_shared<AnalyticSyncScorer>(norm, cfg),
          std::make_shared<AnalyticEmotionScorer>(norm, cfg),
          std::make_shared<AnalyticAffectScorer>(norm, cfg)};
}

EmotionLogits emotion_logits(const FrameStack& frame, const EmotionScorer& scorer) {
  if (frame.count != 1) throw InvalidInput("emotion_logits: expects a single frame");
  NoGradGuard guard;
  std::vector<bool> found;
  Tensor z = scorer.logits(to_tensor(frame), found);
  if (!found[0]) throw NoFaceFound();
  EmotionLogits out;
  for (int k = 0; k < 3; ++k) out.z[k] = z[k];
  return out;
}

AffectScore affect_score(const FrameStack& frame, const AffectScorer& scorer) {
  if (frame.count != 1) throw InvalidInput("affect_score: expects a single frame");
  NoGradGuard guard;
  std::vector<bool> found;
  Tensor a = scorer.affect(to_tensor(frame), found);
  if (!found[0]) throw NoFaceFound();
  return {a[0], a[1]};
}

SyncEmbeddingPair sync_embed(const FrameStack& frames, const AudioFeatures& audio,
                             const SyncScorer& scorer) {
  if (frames.count <= 0 || audio.steps % frames.count != 0)
    throw InvalidInput("sync_embed: audio steps do not match frame count");
  NoGradGuard guard;
  std::vector<bool> valid;
  auto [v, s] = scorer.embed(to_tensor(frames), audio_to_tensor(audio, 1), frames.count, valid);
  if (!valid[0]) throw NoFaceFound();
  auto normalize = [](const Tensor& t) {
    std::vector<double> out(t.values().begin(), t.values().end());
    double nrm = 0;
    for (double x : out) nrm += x * x;
    nrm = std::sqrt(nrm);
    if (nrm > 0)
      for (double& x : out) x /= nrm;
    return out;
  };
  return {normalize(v), normalize(s)};
}

}  // namespace lipemo
