#include "mscate/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>

#include "mscate/embedding.hpp"
#include "mscate/error.hpp"
#include "mscate/kernels.hpp"
#include "mscate/parallel.hpp"
#include "mscate/rng.hpp"

namespace mscate {

namespace {
constexpr PerturbationKind kKinds[] = {PerturbationKind::Mask, PerturbationKind::EdgeFade, PerturbationKind::Contrast,
                                       PerturbationKind::Rotate90};
}  // namespace

std::string flags_to_string(PerturbationFlags flags) {
  std::string out;
  for (auto k : kKinds) {
    if (!(flags & flag_of(k))) continue;
    if (!out.empty()) out += '+';
    out += to_string(k);
  }
  return out.empty() ? "none" : out;
}

PerturbationFlags parse_flags(const std::string& text) {
  auto lower = [](std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
  };
  const std::string t = lower(text);
  if (t.empty() || t == "none") return 0;
  PerturbationFlags flags = 0;
  std::size_t start = 0;
  while (start <= t.size()) {
    const std::size_t end = std::min(t.find('+', start), t.size());
    const std::string name = t.substr(start, end - start);
    bool found = false;
    for (auto k : kKinds) {
      if (lower(to_string(k)) == name) {
        flags |= flag_of(k);
        found = true;
      }
    }
    require(found, ErrorCode::Config, "unknown perturbation '" + name + "' in '" + text + "'");
    start = end + 1;
  }
  return flags;
}

void SimDesign::validate() const {
  require((perturbations & ~kAllPerturbations) == 0, ErrorCode::InvalidArgument, "unknown perturbation bits");
  require(assignment_prob > 0.0 && assignment_prob < 1.0, ErrorCode::InvalidArgument,
          "assignment_prob must be in (0,1)");
  require(small_scale >= 1 && small_scale < large_scale, ErrorCode::InvalidArgument,
          "need 1 <= small_scale < large_scale");
  require(mask_size >= 1 && mask_size <= small_scale, ErrorCode::InvalidArgument,
          "mask_size must be in [1, small_scale]");
  require(contrast_c > 0.0, ErrorCode::InvalidArgument, "contrast_c must be positive");
}

std::vector<PerturbationFlags> assign_perturbations(const SimDesign& design, std::size_t n, std::uint64_t seed) {
  design.validate();
  std::vector<PerturbationFlags> flags(n, 0);
  for (auto k : kKinds) {
    if (!(design.perturbations & flag_of(k))) continue;
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
    for (auto& f : flags)
      if (rng.bernoulli(design.assignment_prob)) f |= flag_of(k);
  }
  return flags;
}

OutcomeMoments outcome_moments(PerturbationFlags flags) {
  require((flags & ~kAllPerturbations) == 0, ErrorCode::UnknownFlagCombination,
          "no outcome entry for flag bits " + std::to_string(flags));
  const bool mask = flags & flag_of(PerturbationKind::Mask);
  const bool fade = flags & flag_of(PerturbationKind::EdgeFade);
  OutcomeMoments m;
  if (mask && fade) {
    m.variance += 200.0 * 200.0;
  } else if (mask) {
    m.mean += 100.0;
    m.variance += 100.0 * 100.0;
  } else if (fade) {
    m.mean -= 100.0;
    m.variance += 100.0 * 100.0;
  }
  if (flags & flag_of(PerturbationKind::Contrast)) {
    m.mean += 100.0;
    m.variance += 100.0 * 100.0;
  }
  if (flags & flag_of(PerturbationKind::Rotate90)) {
    m.mean += 100.0;
    m.variance += 100.0 * 100.0;
  }
  return m;
}

std::vector<double> generate_outcomes(std::span<const PerturbationFlags> flags, PerturbationFlags allowed,
                                      std::uint64_t seed) {
  std::vector<double> y(flags.size());
  for (std::size_t i = 0; i < flags.size(); ++i) {
    require((flags[i] & ~allowed) == 0, ErrorCode::UnknownFlagCombination,
            "unit " + std::to_string(i) + " carries " + flags_to_string(flags[i]) + " outside the design set " +
                flags_to_string(allowed));
    const OutcomeMoments m = outcome_moments(flags[i]);
    if (m.variance == 0.0) {
      y[i] = m.mean;
      continue;
    }
    Rng rng(derive_seed(seed, i));
    y[i] = m.mean + std::sqrt(m.variance) * rng.normal();
  }
  return y;
}

// ---------------------------------------------------------------------------

void SceneSpec::validate() const {
  require(width >= 1 && height >= 1 && bands >= 1, ErrorCode::InvalidArgument, "scene dimensions must be positive");
  require(texture_min >= 0.0 && texture_max >= texture_min, ErrorCode::InvalidArgument,
          "need 0 <= texture_min <= texture_max");
}

RasterBundle synthetic_scene(const SceneSpec& spec) {
  spec.validate();
  constexpr int kWaves = 6;
  Rng rng(spec.seed);
  struct Wave {
    double kx, ky, phase;
  };
  std::vector<Wave> waves;
  for (int k = 0; k < kWaves; ++k) {
    const double wavelength = rng.uniform(64.0, 256.0);
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double f = 2.0 * std::numbers::pi / wavelength;
    waves.push_back({f * std::cos(angle), f * std::sin(angle), rng.uniform(0.0, 2.0 * std::numbers::pi)});
  }
  RasterBundle b;
  b.width = spec.width;
  b.height = spec.height;
  b.bands = spec.bands;
  b.data.resize(static_cast<std::size_t>(spec.width) * spec.height * spec.bands);
  const double norm = 1.0 / std::sqrt(kWaves / 2.0);  // unit variance field
  for (int r = 0; r < spec.height; ++r) {
    for (int c = 0; c < spec.width; ++c) {
      double field = 0.0;
      for (const auto& w : waves) field += std::sin(w.kx * c + w.ky * r + w.phase);
      const double u = std::clamp(0.5 + 0.25 * field * norm, 0.0, 1.0);
      const double amp = spec.texture_min + (spec.texture_max - spec.texture_min) * u;
      const double trend = spec.gradient * (static_cast<double>(c) / spec.width - 0.5);
      for (int band = 0; band < spec.bands; ++band) {
        const double level = spec.level * (1.0 + 0.1 * band);
        b.at(band, r, c) = static_cast<float>(level + trend + amp * rng.normal());
      }
    }
  }
  return b;
}

// ---------------------------------------------------------------------------

void MlpConfig::validate() const {
  require(hidden1 >= 1 && hidden2 >= 1, ErrorCode::InvalidArgument, "hidden sizes must be positive");
  require(epochs >= 1 && batch_size >= 1, ErrorCode::InvalidArgument, "epochs and batch_size must be positive");
  require(learning_rate > 0.0, ErrorCode::InvalidArgument, "learning_rate must be positive");
  require(validation_fraction >= 0.0 && validation_fraction < 1.0, ErrorCode::InvalidArgument,
          "validation_fraction must be in [0,1)");
  require(patience >= 1, ErrorCode::InvalidArgument, "patience must be positive");
}

class MlpTrainer {
 public:
  MlpTrainer(Mlp& model, const MlpConfig& cfg) : m_(model), cfg_(cfg) {}

  void run(const MatrixD& x, std::span<const double> y);

 private:
  struct Grad {
    std::vector<float> w1, b1, w2, b2, w3, b3;
  };
  struct Adam {
    std::vector<float> m, v;
  };

  static void init_layer(Mlp::Layer& l, int in, int out, Rng& rng);
  void backward(std::span<const float> z, float target, Grad& g, float& loss);
  void step(Mlp::Layer& l, std::vector<float>& gw, std::vector<float>& gb, Adam& aw, Adam& ab, float scale);
  double mse(const std::vector<float>& z, const std::vector<float>& t, std::span<const std::uint32_t> rows, int d);

  Mlp& m_;
  const MlpConfig& cfg_;
  std::vector<float> h1_, h2_, d1_, d2_;
  long t_ = 0;
};

void MlpTrainer::init_layer(Mlp::Layer& l, int in, int out, Rng& rng) {
  l.in = in;
  l.out = out;
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  l.w.resize(static_cast<std::size_t>(in) * out);
  l.b.resize(static_cast<std::size_t>(out));
  for (auto& v : l.w) v = static_cast<float>(rng.uniform(-bound, bound));
  for (auto& v : l.b) v = static_cast<float>(rng.uniform(-bound, bound));
}

void MlpTrainer::backward(std::span<const float> z, float target, Grad& g, float& loss) {
  const float out = m_.forward(z, h1_, h2_);
  const float err = out - target;
  loss += err * err;
  const int n1 = m_.l1_.out, n2 = m_.l2_.out, d = m_.l1_.in;
  kernels::axpy(err, h2_, g.w3);
  g.b3[0] += err;
  for (int j = 0; j < n2; ++j) d2_[j] = h2_[j] > 0.0f ? err * m_.l3_.w[j] : 0.0f;
  std::fill(d1_.begin(), d1_.end(), 0.0f);
  for (int j = 0; j < n2; ++j) {
    if (d2_[j] == 0.0f) continue;
    const std::span<const float> row(m_.l2_.w.data() + static_cast<std::size_t>(j) * n1, n1);
    kernels::axpy(d2_[j], h1_, std::span<float>(g.w2.data() + static_cast<std::size_t>(j) * n1, n1));
    g.b2[j] += d2_[j];
    kernels::axpy(d2_[j], row, d1_);
  }
  for (int i = 0; i < n1; ++i) {
    if (h1_[i] <= 0.0f || d1_[i] == 0.0f) continue;
    kernels::axpy(d1_[i], z, std::span<float>(g.w1.data() + static_cast<std::size_t>(i) * d, d));
    g.b1[i] += d1_[i];
  }
}

void MlpTrainer::step(Mlp::Layer& l, std::vector<float>& gw, std::vector<float>& gb, Adam& aw, Adam& ab,
                      float scale) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const float lr = static_cast<float>(cfg_.learning_rate);
  auto update = [&](std::vector<float>& p, std::vector<float>& g, Adam& a) {
    for (std::size_t k = 0; k < p.size(); ++k) {
      const float gk = g[k] * scale;
      a.m[k] = static_cast<float>(b1) * a.m[k] + static_cast<float>(1.0 - b1) * gk;
      a.v[k] = static_cast<float>(b2) * a.v[k] + static_cast<float>(1.0 - b2) * gk * gk;
      const double mh = a.m[k] / c1, vh = a.v[k] / c2;
      p[k] -= static_cast<float>(lr * mh / (std::sqrt(vh) + eps));
      g[k] = 0.0f;
    }
  };
  update(l.w, gw, aw);
  update(l.b, gb, ab);
}

double MlpTrainer::mse(const std::vector<float>& z, const std::vector<float>& t, std::span<const std::uint32_t> rows,
                       int d) {
  double s = 0.0;
  for (auto r : rows) {
    const float out = m_.forward(std::span<const float>(z.data() + static_cast<std::size_t>(r) * d, d), h1_, h2_);
    s += (static_cast<double>(out) - t[r]) * (static_cast<double>(out) - t[r]);
  }
  return s / static_cast<double>(rows.size());
}

void MlpTrainer::run(const MatrixD& x, std::span<const double> y) {
  cfg_.validate();
  const std::size_t n = x.rows();
  const int d = static_cast<int>(x.cols());
  require(n == y.size(), ErrorCode::DimMismatch, "MLP: rows vs targets");
  require(n >= 2 && d >= 1, ErrorCode::TooFewUnits, "MLP needs at least 2 rows and 1 feature");
  for (double v : x.values()) require(std::isfinite(v), ErrorCode::NonFiniteValue, "MLP features");
  for (double v : y) require(std::isfinite(v), ErrorCode::NonFiniteValue, "MLP targets");

  m_.x_mean_.assign(d, 0.0);
  m_.x_scale_.assign(d, 1.0);
  for (int j = 0; j < d; ++j) {
    double s = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x(i, j);
    const double mean = s / n;
    for (std::size_t i = 0; i < n; ++i) ss += (x(i, j) - mean) * (x(i, j) - mean);
    const double sd = std::sqrt(ss / n);
    m_.x_mean_[j] = mean;
    m_.x_scale_[j] = sd > 0.0 ? sd : 1.0;
  }
  {
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : y) ss += (v - mean) * (v - mean);
    m_.y_mean_ = mean;
    m_.y_scale_ = std::sqrt(ss / n);
  }
  Rng init(derive_seed(cfg_.seed, 1));
  init_layer(m_.l1_, d, cfg_.hidden1, init);
  init_layer(m_.l2_, cfg_.hidden1, cfg_.hidden2, init);
  init_layer(m_.l3_, cfg_.hidden2, 1, init);
  if (!(m_.y_scale_ > 0.0)) {
    m_.constant_ = true;
    m_.y_scale_ = 1.0;
    return;
  }

  std::vector<float> z(n * static_cast<std::size_t>(d)), t(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j)
      z[i * d + j] = static_cast<float>((x(i, j) - m_.x_mean_[j]) / m_.x_scale_[j]);
    t[i] = static_cast<float>((y[i] - m_.y_mean_) / m_.y_scale_);
  }

  std::vector<std::uint32_t> train, val;
  {
    const std::size_t n_val = static_cast<std::size_t>(std::floor(n * cfg_.validation_fraction));
    Rng split(derive_seed(cfg_.seed, 2));
    const auto perm = split.permutation(n);
    if (n_val >= 1 && n - n_val >= 1) {
      val.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
      train.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
      std::sort(val.begin(), val.end());
      std::sort(train.begin(), train.end());
    } else {
      train.resize(n);
      std::iota(train.begin(), train.end(), 0u);
    }
  }

  h1_.assign(cfg_.hidden1, 0.0f);
  h2_.assign(cfg_.hidden2, 0.0f);
  d1_.assign(cfg_.hidden1, 0.0f);
  d2_.assign(cfg_.hidden2, 0.0f);
  Grad g{std::vector<float>(m_.l1_.w.size()), std::vector<float>(m_.l1_.b.size()),
         std::vector<float>(m_.l2_.w.size()), std::vector<float>(m_.l2_.b.size()),
         std::vector<float>(m_.l3_.w.size()), std::vector<float>(m_.l3_.b.size())};
  auto adam = [](const std::vector<float>& p) { return Adam{std::vector<float>(p.size()), std::vector<float>(p.size())}; };
  Adam a1w = adam(m_.l1_.w), a1b = adam(m_.l1_.b), a2w = adam(m_.l2_.w), a2b = adam(m_.l2_.b),
       a3w = adam(m_.l3_.w), a3b = adam(m_.l3_.b);

  Rng order_rng(derive_seed(cfg_.seed, 3));
  double best = std::numeric_limits<double>::infinity();
  Mlp::Layer best1 = m_.l1_, best2 = m_.l2_, best3 = m_.l3_;
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
    order_rng.shuffle(std::span<std::uint32_t>(train));
    float loss = 0.0f;
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < train.size(); start += static_cast<std::size_t>(cfg_.batch_size)) {
      const std::size_t end = std::min(train.size(), start + static_cast<std::size_t>(cfg_.batch_size));
      loss = 0.0f;
      for (std::size_t k = start; k < end; ++k) {
        const auto r = train[k];
        backward(std::span<const float>(z.data() + static_cast<std::size_t>(r) * d, d), t[r], g, loss);
      }
      epoch_loss += loss;
      ++t_;
      const float scale = 1.0f / static_cast<float>(end - start);
      step(m_.l1_, g.w1, g.b1, a1w, a1b, scale);
      step(m_.l2_, g.w2, g.b2, a2w, a2b, scale);
      step(m_.l3_, g.w3, g.b3, a3w, a3b, scale);
    }
    require(std::isfinite(epoch_loss), ErrorCode::NonFiniteLoss,
            "training loss became non-finite at epoch " + std::to_string(epoch));
    m_.epochs_run_ = epoch;
    if (val.empty()) continue;
    const double v = mse(z, t, val, d);
    require(std::isfinite(v), ErrorCode::NonFiniteLoss,
            "validation loss became non-finite at epoch " + std::to_string(epoch));
    if (v < best) {
      best = v;
      best1 = m_.l1_;
      best2 = m_.l2_;
      best3 = m_.l3_;
      since_best = 0;
    } else if (++since_best >= cfg_.patience) {
      break;
    }
  }
  if (!val.empty()) {
    m_.l1_ = std::move(best1);
    m_.l2_ = std::move(best2);
    m_.l3_ = std::move(best3);
  }
}

Mlp Mlp::train(const MatrixD& x, std::span<const double> y, const MlpConfig& config) {
  Mlp model;
  MlpTrainer(model, config).run(x, y);
  return model;
}

float Mlp::forward(std::span<const float> x, std::vector<float>& h1, std::vector<float>& h2) const {
  for (int i = 0; i < l1_.out; ++i) {
    const float a = kernels::dot(std::span<const float>(l1_.w.data() + static_cast<std::size_t>(i) * l1_.in, l1_.in), x) + l1_.b[i];
    h1[i] = a > 0.0f ? a : 0.0f;
  }
  for (int j = 0; j < l2_.out; ++j) {
    const float a = kernels::dot(std::span<const float>(l2_.w.data() + static_cast<std::size_t>(j) * l2_.in, l2_.in),
                                 std::span<const float>(h1.data(), l2_.in)) + l2_.b[j];
    h2[j] = a > 0.0f ? a : 0.0f;
  }
  return kernels::dot(std::span<const float>(l3_.w), std::span<const float>(h2.data(), l3_.in)) + l3_.b[0];
}

double Mlp::predict(std::span<const double> row) const {
  if (constant_) return y_mean_;
  require(row.size() == x_mean_.size(), ErrorCode::DimMismatch, "MLP input width");
  std::vector<float> z(row.size()), h1(l1_.out), h2(l2_.out);
  for (std::size_t j = 0; j < row.size(); ++j) z[j] = static_cast<float>((row[j] - x_mean_[j]) / x_scale_[j]);
  return static_cast<double>(forward(z, h1, h2)) * y_scale_ + y_mean_;
}

std::vector<double> Mlp::predict(const MatrixD& x) const {
  std::vector<double> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) out[i] = predict(x.row(i));
  return out;
}

R2Result cv_r2(const MatrixD& x, std::span<const double> y, const MlpConfig& config, int k) {
  require(k >= 2 && static_cast<std::size_t>(k) <= x.rows(), ErrorCode::InvalidArgument, "fold count out of range");
  Rng rng(derive_seed(config.seed, 0xF01D));
  const auto perm = rng.permutation(x.rows());
  std::vector<int> fold(x.rows());
  for (std::size_t i = 0; i < fold.size(); ++i) fold[perm[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  return cv_r2_folds(x, y, config, fold);
}

R2Result cv_r2_folds(const MatrixD& x, std::span<const double> y, const MlpConfig& config, std::span<const int> fold) {
  config.validate();
  const std::size_t n = x.rows();
  require(y.size() == n && fold.size() == n, ErrorCode::DimMismatch, "cv_r2: rows vs targets vs folds");
  require(n >= 50, ErrorCode::TooFewUnits, "cv_r2 needs n >= 50, got " + std::to_string(n));
  std::vector<int> labels(fold.begin(), fold.end());
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  require(labels.size() >= 2, ErrorCode::InvalidArgument, "cv_r2 needs at least two folds");

  R2Result result;
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sst = 0.0;
  for (double v : y) sst += (v - mean) * (v - mean);
  if (sst == 0.0) {
    result.undefined = true;
    result.r2 = std::numeric_limits<double>::quiet_NaN();
    return result;
  }

  std::vector<double> pred(n, 0.0);
  parallel_for(labels.size(), [&](std::size_t f) {
    std::vector<std::uint32_t> held, train;
    for (std::size_t i = 0; i < n; ++i) (fold[i] == labels[f] ? held : train).push_back(static_cast<std::uint32_t>(i));
    std::uint64_t h = config.seed;
    for (auto i : held) h = splitmix64(h ^ i);
    MlpConfig cfg = config;
    cfg.seed = h;
    std::vector<double> y_train;
    for (auto i : train) y_train.push_back(y[i]);
    const Mlp model = Mlp::train(select_rows(x, train), y_train, cfg);
    for (auto i : held) pred[i] = model.predict(x.row(i));
  });
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) sse += (y[i] - pred[i]) * (y[i] - pred[i]);
  result.r2 = 1.0 - sse / sst;
  return result;
}

// ---------------------------------------------------------------------------

std::string to_string(SimMode mode) {
  switch (mode) {
    case SimMode::SingleSmall: return "single_small";
    case SimMode::SingleLarge: return "single_large";
    case SimMode::MultiScaleConcat: return "multi_concat";
  }
  return "unknown";
}

void SimSetup::validate() const {
  design.validate();
  mlp.validate();
  require(n_units >= 50, ErrorCode::InvalidArgument, "n_units must be >= 50");
  require(replicates >= 1, ErrorCode::InvalidArgument, "replicates must be >= 1");
  require(encoder_dim >= 1, ErrorCode::InvalidArgument, "encoder_dim must be positive");
}

SimSample simulate_sample(const SimSetup& setup, const RasterBundle& scene, std::uint64_t replicate_seed) {
  setup.validate();
  const SimDesign& design = setup.design;
  const int big = design.large_scale, small = design.small_scale;
  require(scene.width >= big && scene.height >= big, ErrorCode::OutOfBounds,
          "scene smaller than the large scale " + std::to_string(big));
  const std::size_t n = static_cast<std::size_t>(setup.n_units);

  // Integer-pixel centers whose large window fits: floor(x) in [big/2, W - big + big/2].
  Rng place(derive_seed(replicate_seed, 1));
  std::vector<Point> centers(n);
  for (auto& c : centers) {
    c.x = big / 2 + static_cast<double>(place.index(static_cast<std::uint64_t>(scene.width - big + 1))) + 0.5;
    c.y = big / 2 + static_cast<double>(place.index(static_cast<std::uint64_t>(scene.height - big + 1))) + 0.5;
  }

  SimSample s;
  s.flags = assign_perturbations(design, n, derive_seed(replicate_seed, 2));
  s.y = generate_outcomes(s.flags, design.perturbations, derive_seed(replicate_seed, 3));
  std::vector<std::uint8_t> nuisance(n, 0);
  if (design.contrast_nuisance) {
    Rng rng(derive_seed(replicate_seed, 4));
    for (auto& f : nuisance) f = rng.bernoulli(design.assignment_prob) ? 1 : 0;
  }

  const PyramidEncoder enc_small(setup.encoder_dim, setup.encoder_seed, small, scene.bands);
  const PyramidEncoder enc_large(setup.encoder_dim, setup.encoder_seed, big, scene.bands);
  s.small = MatrixD(n, static_cast<std::size_t>(setup.encoder_dim));
  s.large = MatrixD(n, static_cast<std::size_t>(setup.encoder_dim));

  parallel_for(n, [&](std::size_t i) {
    const PerturbationFlags f = s.flags[i];
    ImagePatch large = fetch(scene, centers[i], big, FetchMode::Strict);
    if (f & flag_of(PerturbationKind::Mask)) large = apply_perturbation(large, Perturbation::mask(design.mask_size));
    // The unit's pixel sits at index big/2 of the large patch.
    Point inner{big / 2 + 0.5, big / 2 + 0.5};
    if (design.weak_prior) {
      Rng rng(derive_seed(replicate_seed, 5, i));
      inner.x = small / 2 + static_cast<double>(rng.index(static_cast<std::uint64_t>(big - small + 1))) + 0.5;
      inner.y = small / 2 + static_cast<double>(rng.index(static_cast<std::uint64_t>(big - small + 1))) + 0.5;
    }
    ImagePatch little = crop(large, inner, small);
    if (f & flag_of(PerturbationKind::EdgeFade)) large = apply_perturbation(large, Perturbation::edge_fade());
    auto both = [&](const Perturbation& p) {
      large = apply_perturbation(large, p);
      little = apply_perturbation(little, p);
    };
    if (f & flag_of(PerturbationKind::Contrast)) both(Perturbation::contrast(design.contrast_c));
    if (f & flag_of(PerturbationKind::Rotate90)) both(Perturbation::rotate90());
    if (nuisance[i]) both(Perturbation::contrast(design.contrast_c));
    const auto es = enc_small.encode(little);
    const auto el = enc_large.encode(large);
    for (std::size_t j = 0; j < es.size(); ++j) {
      s.small(i, j) = es[j];
      s.large(i, j) = el[j];
    }
  });
  return s;
}

const ModeResult& ExperimentReport::mode(SimMode m) const {
  for (const auto& r : modes)
    if (r.mode == m) return r;
  fail(ErrorCode::InvalidArgument, "mode " + to_string(m) + " not in report");
}

ExperimentReport run_experiment(const SimSetup& setup, const RasterBundle& scene, std::span<const SimMode> modes) {
  setup.validate();
  require(!modes.empty(), ErrorCode::InvalidArgument, "no experiment modes requested");
  const std::size_t reps = static_cast<std::size_t>(setup.replicates);
  std::vector<std::vector<R2Result>> r2(reps, std::vector<R2Result>(modes.size()));
  parallel_for(reps, [&](std::size_t r) {
    const std::uint64_t seed = derive_seed(setup.design.seed, r);
    const SimSample s = simulate_sample(setup, scene, seed);
    MlpConfig mlp = setup.mlp;
    mlp.seed = derive_seed(setup.mlp.seed, r);
    for (std::size_t m = 0; m < modes.size(); ++m) {
      switch (modes[m]) {
        case SimMode::SingleSmall: r2[r][m] = cv_r2(s.small, s.y, mlp); break;
        case SimMode::SingleLarge: r2[r][m] = cv_r2(s.large, s.y, mlp); break;
        case SimMode::MultiScaleConcat: r2[r][m] = cv_r2(hstack(s.small, s.large), s.y, mlp); break;
      }
    }
  });

  ExperimentReport report;
  report.design = setup.design;
  for (std::size_t m = 0; m < modes.size(); ++m) {
    ModeResult res;
    res.mode = modes[m];
    for (std::size_t r = 0; r < reps; ++r) {
      res.r2.push_back(r2[r][m].r2);
      res.undefined = res.undefined || r2[r][m].undefined;
    }
    if (res.undefined) {
      res.mean = res.sd = std::numeric_limits<double>::quiet_NaN();
    } else {
      res.mean = std::accumulate(res.r2.begin(), res.r2.end(), 0.0) / static_cast<double>(reps);
      double ss = 0.0;
      for (double v : res.r2) ss += (v - res.mean) * (v - res.mean);
      res.sd = reps > 1 ? std::sqrt(ss / static_cast<double>(reps - 1)) : 0.0;
    }
    report.modes.push_back(std::move(res));
  }
  return report;
}

void write_experiment_table(std::ostream& out, std::span<const ExperimentReport> reports) {
  out << "perturbations,weak_prior,mode,r2_mean,r2_sd,replicates,undefined\n";
  for (const auto& rep : reports) {
    for (const auto& m : rep.modes) {
      out << flags_to_string(rep.design.perturbations) << ',' << (rep.design.weak_prior ? 1 : 0) << ','
          << to_string(m.mode) << ',' << (m.undefined ? std::string("NA") : format_double(m.mean)) << ','
          << (m.undefined ? std::string("NA") : format_double(m.sd)) << ',' << m.r2.size() << ','
          << (m.undefined ? 1 : 0) << '\n';
    }
  }
}

}  // namespace mscate
