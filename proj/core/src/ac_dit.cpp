#include "drnwm/ac_dit.hpp"

#include "drnwm/error.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace drnwm::acdit {

namespace {

constexpr double kMaxPeriod = 10000.0;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Mat randn(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, stddev);
  Mat m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = g(rng);
  }
  return m;
}

ScalarEmbedder make_embedder(int components, const AcDitConfig& cfg, std::mt19937_64& rng) {
  ScalarEmbedder e;
  e.components = components;
  e.frequencies = cfg.frequencies;
  const int in = e.feature_dim();
  e.w1 = randn(cfg.hidden, in, 1.0 / std::sqrt(in), rng);
  e.b1 = randn(cfg.hidden, 1, 0.1, rng);
  e.w2 = randn(cfg.d, cfg.hidden, 1.0 / std::sqrt(cfg.hidden), rng);
  e.b2 = randn(cfg.d, 1, 0.1, rng);
  return e;
}

AttentionParams make_attention(int d, bool modulated, std::mt19937_64& rng) {
  AttentionParams p;
  const double s = 1.0 / std::sqrt(d);
  p.wq = randn(d, d, s, rng);
  p.wk = randn(d, d, s, rng);
  p.wv = randn(d, d, s, rng);
  p.wo = randn(d, d, s, rng);
  p.modulated = modulated;
  if (modulated) {
    p.w_mod = randn(2 * d, d, 0.1 * s, rng);
    p.b_mod = randn(2 * d, 1, 0.05, rng);
  }
  return p;
}

// Embedder ------------------------------------------------------------------

struct EmbedCache {
  Vec f, u, a;
};

Vec embed_cached(const ScalarEmbedder& e, std::span<const double> v, EmbedCache& c) {
  c.f = e.features(v);
  c.u = e.w1 * c.f + e.b1;
  c.a = c.u.unaryExpr([](double x) { return x * sigmoid(x); });
  return e.w2 * c.a + e.b2;
}

void embed_backward(const ScalarEmbedder& e, const EmbedCache& c, const Vec& dout,
                    ScalarEmbedder& g) {
  g.w2 += dout * c.a.transpose();
  g.b2 += dout;
  const Vec da = e.w2.transpose() * dout;
  const Vec du = da.binaryExpr(c.u, [](double d, double u) {
    const double s = sigmoid(u);
    return d * s * (1.0 + u * (1.0 - s));
  });
  g.w1 += du * c.f.transpose();
  g.b1 += du;
}

// Attention layer -------------------------------------------------------------

struct AttnCache {
  Mat x;      // layer input on the query side
  Vec scale;  // modulation (empty when unmodulated)
  Mat hq, hkv, q, k, v, p, o;
  bool self = true;
  bool subtract_self = false;
  Vec xi;
};

Mat attn_forward(const AttentionParams& ap, const Mat& x, const Mat* kv, const Vec* xi,
                 const QueryMask* allowed, bool subtract_self, AttnCache& c) {
  const Eigen::Index d = x.cols();
  c.x = x;
  c.self = kv == nullptr;
  c.subtract_self = subtract_self;
  if (ap.modulated) {
    if (!xi) throw InvalidArgument("modulated attention requires a condition vector");
    c.xi = *xi;
    const Vec ms = ap.w_mod * *xi + ap.b_mod;
    c.scale = ms.head(d);
    const Vec shift = ms.tail(d);
    c.hq = (x.array().rowwise() * (1.0 + c.scale.array()).transpose()).rowwise() +
           shift.array().transpose();
  } else {
    c.scale.resize(0);
    c.hq = x;
  }
  c.hkv = c.self ? c.hq : *kv;
  c.q = c.hq * ap.wq;
  c.k = c.hkv * ap.wk;
  c.v = c.hkv * ap.wv;
  c.o = attention(c.q, c.k, c.v, allowed, &c.p);
  if (subtract_self) c.o -= c.v;
  return c.o * ap.wo;
}

// Accumulates parameter gradients into g, the query-side input gradient into
// dx and the condition gradient into dxi.
void attn_backward(const AttentionParams& ap, const AttnCache& c, const Mat& dout,
                   AttentionParams& g, Mat& dx, Vec* dxi) {
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(c.q.cols()));
  g.wo += c.o.transpose() * dout;
  const Mat d_o = dout * ap.wo.transpose();
  Mat dv = c.p.transpose() * d_o;
  if (c.subtract_self) dv -= d_o;
  const Mat dp = d_o * c.v.transpose();
  const Vec row_dot = (c.p.array() * dp.array()).rowwise().sum();
  const Mat ds = (c.p.array() * (dp.array().colwise() - row_dot.array())).matrix() * inv_sqrt_d;
  const Mat dq = ds * c.k;
  const Mat dk = ds.transpose() * c.q;
  g.wq += c.hq.transpose() * dq;
  g.wk += c.hkv.transpose() * dk;
  g.wv += c.hkv.transpose() * dv;
  Mat dhq = dq * ap.wq.transpose();
  if (c.self) dhq += dk * ap.wk.transpose() + dv * ap.wv.transpose();

  if (ap.modulated) {
    const Eigen::Index d = c.x.cols();
    Vec dms(2 * d);
    dms.head(d) = (dhq.array() * c.x.array()).colwise().sum().transpose();
    dms.tail(d) = dhq.colwise().sum().transpose();
    dx += (dhq.array().rowwise() * (1.0 + c.scale.array()).transpose()).matrix();
    g.w_mod += dms * c.xi.transpose();
    g.b_mod += dms;
    if (dxi) *dxi += ap.w_mod.transpose() * dms;
  } else {
    dx += dhq;
  }
}

double dot(const Mat& a, const Mat& b) { return (a.array() * b.array()).sum(); }

// Whole block ------------------------------------------------------------------

struct FrameCache {
  EmbedCache t, k, a, a_inv, k_f;
  ConditionVector cv;
  AttnCache sa, pa, fa;
  Mat pa_out, fa_out;
};

struct BlockCache {
  std::vector<FrameCache> frames;
  std::vector<AttnCache> ca;  // one per spatial token
  TokenTensor ca_out;
};

void validate_input(const AcDitModel& m, const ChunkInput& in) {
  const auto K = in.z.size();
  if (K == 0) throw InvalidArgument("block_forward: empty chunk");
  const Eigen::Index L = in.z.front().rows();
  const Eigen::Index d = m.config.d;
  for (const auto& z : in.z) {
    if (z.rows() != L || z.cols() != d) throw InvalidArgument("block_forward: token shape mismatch");
  }
  if (in.z_past.rows() != L || in.z_past.cols() != d || in.z_fut.rows() != L ||
      in.z_fut.cols() != d) {
    throw InvalidArgument("block_forward: anchor token shape mismatch");
  }
  if (in.cond.size() != K) throw InvalidArgument("block_forward: need one condition per frame");
  if (!in.masks.empty()) {
    if (in.masks.size() != K) throw InvalidArgument("block_forward: need one mask pair per frame");
    for (const auto& mp : in.masks) {
      if (mp.past.tokens() != L || mp.fut.tokens() != L) {
        throw InvalidArgument("block_forward: mask size differs from token count");
      }
    }
  }
}

ConditionVector frame_condition(const AcDitModel& m, const FrameCondition& fc, FrameCache& c) {
  const double t[1] = {fc.t};
  const double k[1] = {fc.k};
  const double kf[1] = {fc.k_f};
  const Vec psi_t = embed_cached(m.emb_t, t, c.t);
  const Vec psi_k = embed_cached(m.emb_k, k, c.k);
  const Vec psi_a = embed_cached(m.emb_a, fc.action, c.a);
  const Vec psi_ai = embed_cached(m.emb_a_inv, fc.inverse_action, c.a_inv);
  const Vec psi_kf = embed_cached(m.emb_k_f, kf, c.k_f);
  return combine_conditions(psi_t, psi_k, psi_a, psi_ai, psi_kf, m.gamma_cond);
}

TokenTensor forward_impl(const AcDitModel& m, const ChunkInput& in, BlockCache& bc,
                         bool sa_only = false) {
  validate_input(m, in);
  const std::size_t K = in.z.size();
  const Eigen::Index L = in.z.front().rows();
  const Eigen::Index d = m.config.d;
  bc.frames.assign(K, FrameCache{});

  TokenTensor z2(K);
  for (std::size_t f = 0; f < K; ++f) {
    FrameCache& c = bc.frames[f];
    c.cv = frame_condition(m, in.cond[f], c);
    Mat zt = in.z[f] + attn_forward(m.sa, in.z[f], nullptr, &c.cv.xi, nullptr, false, c.sa);
    if (sa_only) {
      z2[f] = std::move(zt);
      continue;
    }
    std::optional<QueryMask> mp, mf;
    if (!in.masks.empty()) {
      mp = to_query_mask(in.masks[f].past);
      mf = to_query_mask(in.masks[f].fut);
    }
    c.pa_out = attn_forward(m.pa, zt, &in.z_past, &c.cv.xi, mp ? &*mp : nullptr, false, c.pa);
    Mat z1 = zt + m.gamma_past * c.pa_out;
    c.fa_out = attn_forward(m.fa, z1, &in.z_fut, &c.cv.xi, mf ? &*mf : nullptr, false, c.fa);
    z2[f] = z1 + m.gamma_fut * c.fa_out;
  }
  if (sa_only) return z2;

  bc.ca.assign(static_cast<std::size_t>(L), AttnCache{});
  bc.ca_out.assign(K, Mat::Zero(L, d));
  Mat seq(static_cast<Eigen::Index>(K), d);
  for (Eigen::Index l = 0; l < L; ++l) {
    for (std::size_t f = 0; f < K; ++f) seq.row(static_cast<Eigen::Index>(f)) = z2[f].row(l);
    const Mat out = attn_forward(m.ca, seq, nullptr, nullptr, nullptr, true,
                                 bc.ca[static_cast<std::size_t>(l)]);
    for (std::size_t f = 0; f < K; ++f) bc.ca_out[f].row(l) = out.row(static_cast<Eigen::Index>(f));
  }
  TokenTensor z3(K);
  for (std::size_t f = 0; f < K; ++f) z3[f] = z2[f] + m.gamma_tau * bc.ca_out[f];
  return z3;
}

void zero_slots(AcDitModel& m) {
  for (auto& s : parameter_slots(m)) std::fill(s.data, s.data + s.size(), 0.0);
}

void push_attention(std::vector<ParamSlot>& out, const std::string& prefix, AttentionParams& p) {
  out.push_back({prefix + ".wq", p.wq.data(), p.wq.rows(), p.wq.cols()});
  out.push_back({prefix + ".wk", p.wk.data(), p.wk.rows(), p.wk.cols()});
  out.push_back({prefix + ".wv", p.wv.data(), p.wv.rows(), p.wv.cols()});
  out.push_back({prefix + ".wo", p.wo.data(), p.wo.rows(), p.wo.cols()});
  if (p.modulated) {
    out.push_back({prefix + ".w_mod", p.w_mod.data(), p.w_mod.rows(), p.w_mod.cols()});
    out.push_back({prefix + ".b_mod", p.b_mod.data(), p.b_mod.rows(), 1});
  }
}

void push_embedder(std::vector<ParamSlot>& out, const std::string& prefix, ScalarEmbedder& e) {
  out.push_back({prefix + ".w1", e.w1.data(), e.w1.rows(), e.w1.cols()});
  out.push_back({prefix + ".b1", e.b1.data(), e.b1.rows(), 1});
  out.push_back({prefix + ".w2", e.w2.data(), e.w2.rows(), e.w2.cols()});
  out.push_back({prefix + ".b2", e.b2.data(), e.b2.rows(), 1});
}

}  // namespace

QueryMask to_query_mask(const masks::AttentionMask& m) {
  const int L = m.tokens();
  QueryMask q(L, L);
  for (int src = 0; src < L; ++src) {
    for (int goal = 0; goal < L; ++goal) q(goal, src) = m.allows(src, goal);
  }
  return q;
}

Mat attention(const Mat& q, const Mat& k, const Mat& v, const QueryMask* allowed, Mat* weights) {
  if (q.cols() != k.cols() || k.rows() != v.rows()) {
    throw InvalidArgument("attention: incompatible query/key/value shapes");
  }
  if (allowed && (allowed->rows() != q.rows() || allowed->cols() != k.rows())) {
    throw InvalidArgument("attention: mask shape mismatch");
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Mat p = (q * k.transpose()) * inv_sqrt_d;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      if (!allowed || (*allowed)(i, j)) mx = std::max(mx, p(i, j));
    }
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw InvalidArgument("attention: query row " + std::to_string(i) + " has no allowed key");
    }
    double sum = 0.0;
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      const double e = (!allowed || (*allowed)(i, j)) ? std::exp(p(i, j) - mx) : 0.0;
      p(i, j) = e;
      sum += e;
    }
    p.row(i) /= sum;
  }
  Mat out = p * v;
  if (weights) *weights = std::move(p);
  return out;
}

Mat masked_cross_attention(const Mat& queries, const Mat& kv, const masks::AttentionMask& mask) {
  if (mask.tokens() != queries.rows() || mask.tokens() != kv.rows()) {
    throw InvalidArgument("masked_cross_attention: mask size differs from token count");
  }
  const QueryMask q = to_query_mask(mask);
  return attention(queries, kv, kv, &q);
}

Vec ScalarEmbedder::features(std::span<const double> v) const {
  if (static_cast<int>(v.size()) != components) {
    throw InvalidArgument("embedder: expected " + std::to_string(components) + " components");
  }
  Vec f(feature_dim());
  for (int c = 0; c < components; ++c) {
    if (!std::isfinite(v[static_cast<std::size_t>(c)])) throw InvalidArgument("embedder: non-finite input");
    for (int i = 0; i < frequencies; ++i) {
      const double w = std::exp(-std::log(kMaxPeriod) * i / frequencies);
      const double arg = v[static_cast<std::size_t>(c)] * w;
      f(c * 2 * frequencies + i) = std::cos(arg);
      f(c * 2 * frequencies + frequencies + i) = std::sin(arg);
    }
  }
  return f;
}

Vec ScalarEmbedder::embed(std::span<const double> v) const {
  EmbedCache c;
  return embed_cached(*this, v, c);
}

Vec embed_scalar(const ScalarEmbedder& e, std::span<const double> v) { return e.embed(v); }

ConditionVector combine_conditions(const Vec& psi_t, const Vec& psi_k, const Vec& psi_a,
                                   const Vec& psi_a_inv, const Vec& psi_k_f, double gamma_cond) {
  const auto d = psi_t.size();
  if (psi_k.size() != d || psi_a.size() != d || psi_a_inv.size() != d || psi_k_f.size() != d) {
    throw InvalidArgument("combine_conditions: embedding dimensions differ");
  }
  ConditionVector cv;
  cv.base = psi_t + psi_k + psi_a;
  cv.fut = psi_a_inv + psi_k_f;
  cv.gamma_cond = gamma_cond;
  cv.xi = cv.base + gamma_cond * cv.fut;
  return cv;
}

AcDitModel AcDitModel::initialize(const AcDitConfig& cfg, std::uint64_t seed) {
  if (cfg.d <= 0 || cfg.hidden <= 0 || cfg.frequencies <= 0) {
    throw InvalidArgument("AcDitConfig: sizes must be positive");
  }
  std::mt19937_64 rng(seed);
  AcDitModel m;
  m.config = cfg;
  m.emb_t = make_embedder(1, cfg, rng);
  m.emb_k = make_embedder(1, cfg, rng);
  m.emb_a = make_embedder(3, cfg, rng);
  m.emb_a_inv = make_embedder(3, cfg, rng);
  m.emb_k_f = make_embedder(1, cfg, rng);
  m.sa = make_attention(cfg.d, true, rng);
  m.pa = make_attention(cfg.d, true, rng);
  m.fa = make_attention(cfg.d, true, rng);
  m.ca = make_attention(cfg.d, false, rng);
  return m;
}

AcDitModel AcDitModel::zeros_like() const {
  AcDitModel z = *this;
  zero_slots(z);
  return z;
}

std::vector<ParamSlot> parameter_slots(AcDitModel& m) {
  std::vector<ParamSlot> out;
  push_embedder(out, "emb_t", m.emb_t);
  push_embedder(out, "emb_k", m.emb_k);
  push_embedder(out, "emb_a", m.emb_a);
  push_embedder(out, "emb_a_inv", m.emb_a_inv);
  push_embedder(out, "emb_k_f", m.emb_k_f);
  out.push_back({"gamma_cond", &m.gamma_cond, 1, 1});
  push_attention(out, "sa", m.sa);
  push_attention(out, "pa", m.pa);
  push_attention(out, "fa", m.fa);
  push_attention(out, "ca", m.ca);
  out.push_back({"gamma_past", &m.gamma_past, 1, 1});
  out.push_back({"gamma_fut", &m.gamma_fut, 1, 1});
  out.push_back({"gamma_tau", &m.gamma_tau, 1, 1});
  return out;
}

std::vector<ConditionVector> chunk_conditions(const AcDitModel& m, const ChunkInput& in) {
  std::vector<ConditionVector> out;
  for (const auto& fc : in.cond) {
    FrameCache c;
    out.push_back(frame_condition(m, fc, c));
  }
  return out;
}

TokenTensor block_forward(const AcDitModel& m, const ChunkInput& in) {
  BlockCache bc;
  return forward_impl(m, in, bc);
}

TokenTensor sa_only_forward(const AcDitModel& m, const ChunkInput& in) {
  BlockCache bc;
  return forward_impl(m, in, bc, true);
}

LossAndGrad loss_and_grad(const AcDitModel& m, const ChunkInput& in, const TokenTensor& target) {
  BlockCache bc;
  const TokenTensor out = forward_impl(m, in, bc);
  LossAndGrad res;
  res.loss = denoising_loss(target, out);
  res.grad = m.zeros_like();
  AcDitModel& g = res.grad;

  const std::size_t K = out.size();
  const Eigen::Index L = out.front().rows();
  const Eigen::Index d = m.config.d;
  double n_total = 0.0;
  for (const auto& z : out) n_total += static_cast<double>(z.size());

  TokenTensor dz(K);
  for (std::size_t f = 0; f < K; ++f) dz[f] = 2.0 * (out[f] - target[f]) / n_total;

  // z3 = z2 + gamma_tau * CA(z2)
  for (std::size_t f = 0; f < K; ++f) g.gamma_tau += dot(bc.ca_out[f], dz[f]);
  {
    Mat dseq(static_cast<Eigen::Index>(K), d);
    for (Eigen::Index l = 0; l < L; ++l) {
      for (std::size_t f = 0; f < K; ++f) dseq.row(static_cast<Eigen::Index>(f)) = m.gamma_tau * dz[f].row(l);
      Mat dx = Mat::Zero(static_cast<Eigen::Index>(K), d);
      attn_backward(m.ca, bc.ca[static_cast<std::size_t>(l)], dseq, g.ca, dx, nullptr);
      for (std::size_t f = 0; f < K; ++f) dz[f].row(l) += dx.row(static_cast<Eigen::Index>(f));
    }
  }

  for (std::size_t f = 0; f < K; ++f) {
    const FrameCache& c = bc.frames[f];
    Vec dxi = Vec::Zero(d);

    // z2 = z1 + gamma_fut * FA(z1)
    g.gamma_fut += dot(c.fa_out, dz[f]);
    Mat dz1 = dz[f];
    attn_backward(m.fa, c.fa, m.gamma_fut * dz[f], g.fa, dz1, &dxi);

    // z1 = z~ + gamma_past * PA(z~)
    g.gamma_past += dot(c.pa_out, dz1);
    Mat dzt = dz1;
    attn_backward(m.pa, c.pa, m.gamma_past * dz1, g.pa, dzt, &dxi);

    // z~ = z + SA(z); the gradient with respect to z itself is not needed.
    Mat dz_in = Mat::Zero(L, d);
    attn_backward(m.sa, c.sa, dzt, g.sa, dz_in, &dxi);

    // xi = base + gamma_cond * fut
    g.gamma_cond += c.cv.fut.dot(dxi);
    const Vec dfut = m.gamma_cond * dxi;
    embed_backward(m.emb_t, c.t, dxi, g.emb_t);
    embed_backward(m.emb_k, c.k, dxi, g.emb_k);
    embed_backward(m.emb_a, c.a, dxi, g.emb_a);
    embed_backward(m.emb_a_inv, c.a_inv, dfut, g.emb_a_inv);
    embed_backward(m.emb_k_f, c.k_f, dfut, g.emb_k_f);
  }
  return res;
}

TokenTensor random_tokens(int frames, int tokens, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TokenTensor t;
  for (int f = 0; f < frames; ++f) t.push_back(randn(tokens, d, 1.0, rng));
  return t;
}

ChunkInput random_chunk(const AcDitConfig& cfg, int tokens, int frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ChunkInput in;
  for (int f = 0; f < frames; ++f) in.z.push_back(randn(tokens, cfg.d, 1.0, rng));
  in.z_past = randn(tokens, cfg.d, 1.0, rng);
  in.z_fut = randn(tokens, cfg.d, 1.0, rng);
  std::uniform_real_distribution<double> step(1.0, 100.0);
  std::uniform_real_distribution<double> act(-0.5, 0.5);
  for (int f = 0; f < frames; ++f) {
    FrameCondition fc;
    fc.t = std::floor(step(rng));
    fc.k = f + 1;
    fc.k_f = frames + 1 - (f + 1);
    for (auto& a : fc.action) a = act(rng);
    for (auto& a : fc.inverse_action) a = act(rng);
    in.cond.push_back(fc);
  }
  return in;
}

}  // namespace drnwm::acdit
