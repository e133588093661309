#include "fuselm/model.hpp"

#include <algorithm>
#include <type_traits>

#include "fuselm/error.hpp"
#include "fuselm/providers.hpp"
#include "fuselm/rng.hpp"

namespace fuselm {
namespace {

constexpr double kInitRange = 0.08;

std::uint64_t name_hash(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Every tensor draws from its own stream, so tensors shared between fusion
// modes start identical whatever else the mode adds.
template <typename Tensor>
void fill_uniform(Tensor& t, std::uint64_t seed, std::string_view name) {
  std::mt19937_64 rng(mix64(seed, name_hash(name)));
  using Scalar = typename Tensor::Scalar;
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    t.data()[i] = static_cast<Scalar>((2.0 * unit_double(rng) - 1.0) * kInitRange);
  }
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

template <typename Scalar>
VectorT<Scalar> to_vector(const Artefact& a) {
  VectorT<Scalar> v(static_cast<Eigen::Index>(a.dim()));
  for (std::size_t i = 0; i < a.dim(); ++i) v(static_cast<Eigen::Index>(i)) = static_cast<Scalar>(a.values[i]);
  return v;
}

void check_artefact_dim(const ModelConfig& c, const Artefact& a) {
  if (a.dim() != c.artefact_dim) {
    throw ConfigError("artefact has dimension " + std::to_string(a.dim()) + ", model expects " +
                      std::to_string(c.artefact_dim));
  }
}

void check_ids(const ModelConfig& c, std::span<const TokenId> ids) {
  if (ids.size() < 2) throw InputError("sentence needs at least BOS and EOS");
  for (const auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= c.vocab_size) {
      throw InputError("token id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(c.vocab_size));
    }
  }
}

// Post-activation gates from the pre-activation z, in place: (i, f, g, o).
template <typename Scalar>
void activate(Eigen::Ref<VectorT<Scalar>> z, Eigen::Index hidden) {
  for (Eigen::Index k = 0; k < 4 * hidden; ++k) {
    z(k) = (k >= 2 * hidden && k < 3 * hidden) ? std::tanh(z(k)) : sigmoid(z(k));
  }
}

template <typename Scalar>
struct Trace {
  MatrixT<Scalar> inputs;     // d_e x T
  MatrixT<Scalar> gates;      // 4H x T, activated
  MatrixT<Scalar> cells;      // H x (T+1); column 0 is c0
  MatrixT<Scalar> hiddens;    // H x (T+1); column 0 is h0
  MatrixT<Scalar> cell_tanh;  // H x T
  MatrixT<Scalar> artefacts;  // D x T, late modes only
  MatrixT<Scalar> late_proj;  // H x T, late-add / late-mul
  MatrixT<Scalar> fused;      // H x T; late-concat keeps only the hidden part here
  MatrixT<Scalar> projected;  // d_e x T
  MatrixT<Scalar> logits;     // V x T
  VectorT<Scalar> early_artefact;
};

// Resolves the artefact list against the mode. Returns the single early
// artefact (if any).
const Artefact* validate_artefacts(const ModelConfig& c, std::size_t targets,
                                   std::span<const Artefact> artefacts) {
  if (c.mode == FusionMode::None) {
    if (!artefacts.empty() && artefacts.size() != targets) {
      throw InputError("expected " + std::to_string(targets) + " artefacts, got " +
                       std::to_string(artefacts.size()));
    }
    return nullptr;
  }
  if (is_early(c.mode)) {
    if (artefacts.size() != 1 && artefacts.size() != targets) {
      throw InputError("early fusion takes one artefact per sentence, got " + std::to_string(artefacts.size()));
    }
    for (const auto& a : artefacts) {
      check_artefact_dim(c, a);
      if (a.values != artefacts.front().values) {
        throw InputError("early fusion needs the same artefact at every position of a sentence");
      }
    }
    return &artefacts.front();
  }
  if (artefacts.size() != targets) {
    throw InputError("late fusion needs " + std::to_string(targets) + " artefacts, got " +
                     std::to_string(artefacts.size()));
  }
  for (const auto& a : artefacts) check_artefact_dim(c, a);
  return nullptr;
}

template <typename Scalar>
Trace<Scalar> run_forward(const LMParamsT<Scalar>& p, std::span<const TokenId> ids,
                          std::span<const Artefact> artefacts) {
  const auto& c = p.config;
  check_ids(c, ids);
  const auto T = static_cast<Eigen::Index>(ids.size() - 1);
  const auto H = static_cast<Eigen::Index>(c.hidden_dim);
  const Artefact* early = validate_artefacts(c, ids.size() - 1, artefacts);

  Trace<Scalar> tr;
  tr.inputs.resize(static_cast<Eigen::Index>(c.embed_dim), T);
  for (Eigen::Index t = 0; t < T; ++t) tr.inputs.col(t) = p.embed_in.row(ids[t]).transpose();

  tr.gates = p.w_x * tr.inputs;
  tr.gates.colwise() += p.bias;
  tr.cells.resize(H, T + 1);
  tr.hiddens.resize(H, T + 1);
  tr.cell_tanh.resize(H, T);

  StepState<Scalar> init{VectorT<Scalar>::Zero(H), VectorT<Scalar>::Zero(H)};
  if (early != nullptr) {
    tr.early_artefact = to_vector<Scalar>(*early);
    init = fuse_early(p, *early);
  }
  tr.hiddens.col(0) = init.h;
  tr.cells.col(0) = init.c;

  for (Eigen::Index t = 0; t < T; ++t) {
    auto z = tr.gates.col(t);
    z.noalias() += p.w_h * tr.hiddens.col(t);
    activate<Scalar>(z, H);
    tr.cells.col(t + 1) = z.segment(H, H).cwiseProduct(tr.cells.col(t)) +
                          z.segment(0, H).cwiseProduct(z.segment(2 * H, H));
    tr.cell_tanh.col(t) = tr.cells.col(t + 1).array().tanh();
    tr.hiddens.col(t + 1) = z.segment(3 * H, H).cwiseProduct(tr.cell_tanh.col(t));
  }

  const auto hs = tr.hiddens.rightCols(T);
  if (is_late(c.mode)) {
    tr.artefacts.resize(static_cast<Eigen::Index>(c.artefact_dim), T);
    for (Eigen::Index t = 0; t < T; ++t) tr.artefacts.col(t) = to_vector<Scalar>(artefacts[t]);
  }
  switch (c.mode) {
    case FusionMode::LateAdd:
      tr.late_proj = p.late * tr.artefacts;
      tr.fused = hs + tr.late_proj;
      break;
    case FusionMode::LateMul:
      tr.late_proj = p.late * tr.artefacts;
      tr.fused = hs.cwiseProduct(tr.late_proj);
      break;
    default:
      tr.fused = hs;
  }
  // late-concat: P [h; a] = P_h h + P_a a, split so the hidden part is
  // computed exactly as without fusion.
  tr.projected = p.proj.leftCols(H) * tr.fused;
  if (c.mode == FusionMode::LateConcat) {
    tr.projected += p.proj.rightCols(static_cast<Eigen::Index>(c.artefact_dim)) * tr.artefacts;
  }
  tr.logits = p.embed_out * tr.projected;
  tr.logits.colwise() += p.bias_out;

  if (!tr.logits.allFinite()) {
    for (Eigen::Index t = 0; t < T; ++t) {
      if (!tr.logits.col(t).allFinite()) {
        throw NumericError("non-finite logits at position " + std::to_string(t + 1));
      }
    }
  }
  return tr;
}

}  // namespace

const char* to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::None: return "none";
    case FusionMode::EarlyH0: return "early-h0";
    case FusionMode::EarlyC0: return "early-c0";
    case FusionMode::EarlyBoth: return "early-both";
    case FusionMode::LateConcat: return "late-concat";
    case FusionMode::LateAdd: return "late-add";
    case FusionMode::LateMul: return "late-mul";
  }
  return "none";
}

FusionMode parse_fusion_mode(std::string_view name) {
  for (auto m : {FusionMode::None, FusionMode::EarlyH0, FusionMode::EarlyC0, FusionMode::EarlyBoth,
                 FusionMode::LateConcat, FusionMode::LateAdd, FusionMode::LateMul}) {
    if (name == to_string(m)) return m;
  }
  throw ConfigError("unknown fusion mode '" + std::string(name) +
                    "' (none|early-h0|early-c0|early-both|late-concat|late-add|late-mul)");
}

const char* to_string(ModelType type) { return type == ModelType::Ffn ? "ffn" : "lstm"; }

void ModelConfig::validate() const {
  if (vocab_size < Vocab::kNumSpecials) throw ConfigError("vocab_size too small");
  if (artefact_dim == 0) throw ConfigError("artefact_dim must be positive");
  if (type == ModelType::Lstm && (embed_dim == 0 || hidden_dim == 0)) {
    throw ConfigError("embed_dim and hidden_dim must be positive");
  }
  if (type == ModelType::Ffn && ffn_width == 0) throw ConfigError("ffn_width must be positive");
}

template <typename Scalar>
LMParamsT<Scalar> LMParamsT<Scalar>::zeros(const ModelConfig& config) {
  config.validate();
  if (config.type != ModelType::Lstm) throw ConfigError("LMParams needs an lstm config");
  const auto V = static_cast<Eigen::Index>(config.vocab_size);
  const auto E = static_cast<Eigen::Index>(config.embed_dim);
  const auto H = static_cast<Eigen::Index>(config.hidden_dim);
  const auto D = static_cast<Eigen::Index>(config.artefact_dim);
  const auto m = config.mode;
  LMParamsT p;
  p.config = config;
  p.embed_in = Matrix::Zero(V, E);
  p.w_x = Matrix::Zero(4 * H, E);
  p.w_h = Matrix::Zero(4 * H, H);
  p.bias = Vector::Zero(4 * H);
  if (m == FusionMode::EarlyH0 || m == FusionMode::EarlyBoth) p.early_h = Matrix::Zero(H, D);
  if (m == FusionMode::EarlyC0 || m == FusionMode::EarlyBoth) p.early_c = Matrix::Zero(H, D);
  if (m == FusionMode::LateAdd || m == FusionMode::LateMul) p.late = Matrix::Zero(H, D);
  p.proj = Matrix::Zero(E, static_cast<Eigen::Index>(config.fused_dim()));
  p.embed_out = Matrix::Zero(V, E);
  p.bias_out = Vector::Zero(V);
  return p;
}

template <typename Scalar>
LMParamsT<Scalar> LMParamsT<Scalar>::init(const ModelConfig& config) {
  auto p = zeros(config);
  p.for_each([&](const char* name, auto& t) {
    if constexpr (std::decay_t<decltype(t)>::ColsAtCompileTime != 1) fill_uniform(t, config.seed, name);
  });
  const auto H = static_cast<Eigen::Index>(config.hidden_dim);
  p.bias.segment(H, H).setConstant(Scalar(1));
  return p;
}

template <typename Scalar>
void LMParamsT<Scalar>::set_zero() {
  for_each([](const char*, auto& t) { t.setZero(); });
}

template <typename Scalar>
std::size_t LMParamsT<Scalar>::num_parameters() const {
  std::size_t n = 0;
  for_each([&](const char*, const auto& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

template <typename Scalar>
StepState<Scalar> lstm_step(const LMParamsT<Scalar>& p, const VectorT<Scalar>& x,
                            const StepState<Scalar>& state) {
  const auto H = static_cast<Eigen::Index>(p.config.hidden_dim);
  if (x.size() != p.w_x.cols() || state.h.size() != H || state.c.size() != H) {
    throw ConfigError("lstm_step: input or state has the wrong size");
  }
  VectorT<Scalar> z = p.w_x * x + p.w_h * state.h + p.bias;
  activate<Scalar>(z, H);
  StepState<Scalar> next;
  next.c = z.segment(H, H).cwiseProduct(state.c) + z.segment(0, H).cwiseProduct(z.segment(2 * H, H));
  next.h = z.segment(3 * H, H).cwiseProduct(VectorT<Scalar>(next.c.array().tanh()));
  if (!next.h.allFinite() || !next.c.allFinite()) throw NumericError("lstm_step produced a non-finite state");
  return next;
}

template <typename Scalar>
StepState<Scalar> fuse_early(const LMParamsT<Scalar>& p, const Artefact& a) {
  const auto H = static_cast<Eigen::Index>(p.config.hidden_dim);
  StepState<Scalar> s{VectorT<Scalar>::Zero(H), VectorT<Scalar>::Zero(H)};
  if (!is_early(p.config.mode)) return s;
  check_artefact_dim(p.config, a);
  const auto v = to_vector<Scalar>(a);
  if (p.early_h.size() > 0) s.h = p.early_h * v;
  if (p.early_c.size() > 0) s.c = p.early_c * v;
  return s;
}

template <typename Scalar>
VectorT<Scalar> fuse_late(const LMParamsT<Scalar>& p, const VectorT<Scalar>& h, const Artefact& a) {
  const auto& c = p.config;
  if (h.size() != static_cast<Eigen::Index>(c.hidden_dim)) throw ConfigError("fuse_late: hidden size mismatch");
  if (!is_late(c.mode)) return h;
  check_artefact_dim(c, a);
  const auto v = to_vector<Scalar>(a);
  switch (c.mode) {
    case FusionMode::LateConcat: {
      VectorT<Scalar> out(h.size() + v.size());
      out << h, v;
      return out;
    }
    case FusionMode::LateAdd: return h + p.late * v;
    case FusionMode::LateMul: return h.cwiseProduct(p.late * v);
    default: return h;
  }
}

template <typename Scalar>
MatrixT<Scalar> forward_sentence(const LMParamsT<Scalar>& params, std::span<const TokenId> ids,
                                 std::span<const Artefact> artefacts) {
  return run_forward(params, ids, artefacts).logits;
}

template <typename Scalar>
LossSummary sentence_loss(const LMParamsT<Scalar>& params, std::span<const TokenId> ids,
                          std::span<const Artefact> artefacts) {
  const auto logits = forward_sentence(params, ids, artefacts);
  LossSummary out;
  out.tokens = ids.size() - 1;
  out.token_nll.reserve(out.tokens);
  for (std::size_t t = 0; t < out.tokens; ++t) {
    const double nll = token_nll(logits.col(static_cast<Eigen::Index>(t)), ids[t + 1]);
    out.token_nll.push_back(nll);
    out.nll += nll;
  }
  if (!std::isfinite(out.nll)) throw NumericError("non-finite sentence loss");
  return out;
}

template <typename Scalar>
LossSummary loss_and_grads(const LMParamsT<Scalar>& p, std::span<const TokenId> ids,
                           std::span<const Artefact> artefacts, LMParamsT<Scalar>& g) {
  const auto tr = run_forward(p, ids, artefacts);
  const auto& c = p.config;
  const auto T = static_cast<Eigen::Index>(ids.size() - 1);
  const auto H = static_cast<Eigen::Index>(c.hidden_dim);
  const auto D = static_cast<Eigen::Index>(c.artefact_dim);

  if (g.config != c || g.embed_in.rows() != p.embed_in.rows()) g = LMParamsT<Scalar>::zeros(c);

  LossSummary out;
  out.tokens = static_cast<std::size_t>(T);
  out.token_nll.reserve(out.tokens);
  MatrixT<Scalar> d_logits(tr.logits.rows(), T);
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto col = tr.logits.col(t);
    const double max = static_cast<double>(col.maxCoeff());
    double sum = 0.0;
    for (Eigen::Index v = 0; v < col.size(); ++v) sum += std::exp(static_cast<double>(col(v)) - max);
    const double lse = max + std::log(sum);
    const auto target = ids[static_cast<std::size_t>(t) + 1];
    const double nll = lse - static_cast<double>(col(target));
    out.token_nll.push_back(nll);
    out.nll += nll;
    for (Eigen::Index v = 0; v < col.size(); ++v) {
      d_logits(v, t) = static_cast<Scalar>(std::exp(static_cast<double>(col(v)) - lse));
    }
    d_logits(target, t) -= Scalar(1);
  }
  if (!std::isfinite(out.nll)) throw NumericError("non-finite sentence loss");

  g.bias_out = d_logits.rowwise().sum();
  g.embed_out.noalias() = d_logits * tr.projected.transpose();
  const MatrixT<Scalar> d_proj_out = p.embed_out.transpose() * d_logits;  // d_e x T

  g.proj.leftCols(H).noalias() = d_proj_out * tr.fused.transpose();
  MatrixT<Scalar> d_fused = p.proj.leftCols(H).transpose() * d_proj_out;  // H x T
  if (c.mode == FusionMode::LateConcat) {
    g.proj.rightCols(D).noalias() = d_proj_out * tr.artefacts.transpose();
  }

  MatrixT<Scalar> d_hidden;
  const auto hs = tr.hiddens.rightCols(T);
  switch (c.mode) {
    case FusionMode::LateAdd:
      g.late.noalias() = d_fused * tr.artefacts.transpose();
      d_hidden = std::move(d_fused);
      break;
    case FusionMode::LateMul: {
      const MatrixT<Scalar> d_late_proj = d_fused.cwiseProduct(hs);
      g.late.noalias() = d_late_proj * tr.artefacts.transpose();
      d_hidden = d_fused.cwiseProduct(tr.late_proj);
      break;
    }
    default:
      d_hidden = std::move(d_fused);
  }

  // Backpropagation through time.
  MatrixT<Scalar> d_gates(4 * H, T);
  VectorT<Scalar> dh_next = VectorT<Scalar>::Zero(H);
  VectorT<Scalar> dc_next = VectorT<Scalar>::Zero(H);
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    const auto gates = tr.gates.col(t);
    const auto i = gates.segment(0, H);
    const auto f = gates.segment(H, H);
    const auto gg = gates.segment(2 * H, H);
    const auto o = gates.segment(3 * H, H);
    const auto tc = tr.cell_tanh.col(t);

    const VectorT<Scalar> dh = d_hidden.col(t) + dh_next;
    const VectorT<Scalar> dc =
        dc_next + dh.cwiseProduct(o).cwiseProduct((Scalar(1) - tc.array().square()).matrix());
    auto dz = d_gates.col(t);
    dz.segment(0, H) = dc.cwiseProduct(gg).cwiseProduct(i.cwiseProduct((Scalar(1) - i.array()).matrix()));
    dz.segment(H, H) =
        dc.cwiseProduct(tr.cells.col(t)).cwiseProduct(f.cwiseProduct((Scalar(1) - f.array()).matrix()));
    dz.segment(2 * H, H) = dc.cwiseProduct(i).cwiseProduct((Scalar(1) - gg.array().square()).matrix());
    dz.segment(3 * H, H) = dh.cwiseProduct(tc).cwiseProduct(o.cwiseProduct((Scalar(1) - o.array()).matrix()));
    dc_next = dc.cwiseProduct(f);
    dh_next.noalias() = p.w_h.transpose() * dz;
  }

  g.w_x.noalias() = d_gates * tr.inputs.transpose();
  g.w_h.noalias() = d_gates * tr.hiddens.leftCols(T).transpose();
  g.bias = d_gates.rowwise().sum();
  const MatrixT<Scalar> d_inputs = p.w_x.transpose() * d_gates;
  g.embed_in.setZero();
  for (Eigen::Index t = 0; t < T; ++t) g.embed_in.row(ids[t]) += d_inputs.col(t).transpose();

  if (g.early_h.size() > 0) g.early_h.noalias() = dh_next * tr.early_artefact.transpose();
  if (g.early_c.size() > 0) g.early_c.noalias() = dc_next * tr.early_artefact.transpose();
  return out;
}

template <typename Scalar>
std::vector<TokenId> generate(const LMParamsT<Scalar>& p, const ArtefactProvider& provider,
                              std::size_t max_len, std::mt19937_64& rng, DecodeStrategy strategy,
                              std::size_t sentence_idx) {
  std::vector<TokenId> body;
  if (max_len == 0) return body;
  const auto& c = p.config;
  if (c.mode != FusionMode::None && provider.dim() != c.artefact_dim) {
    throw ConfigError("provider dimension does not match the model");
  }
  StepState<Scalar> state{VectorT<Scalar>::Zero(static_cast<Eigen::Index>(c.hidden_dim)),
                          VectorT<Scalar>::Zero(static_cast<Eigen::Index>(c.hidden_dim))};
  if (is_early(c.mode)) state = fuse_early(p, provider.artefact_for(sentence_idx, body, 1, CropSpec::none()));

  TokenId current = Vocab::kBos;
  while (body.size() < max_len) {
    state = lstm_step(p, VectorT<Scalar>(p.embed_in.row(current).transpose()), state);
    VectorT<Scalar> fused = state.h;
    if (is_late(c.mode)) {
      fused = fuse_late(p, state.h, provider.artefact_for(sentence_idx, body, body.size() + 1, CropSpec::none()));
    }
    VectorT<Scalar> logits = p.embed_out * (p.proj * fused) + p.bias_out;
    logits(Vocab::kBos) = -std::numeric_limits<Scalar>::infinity();

    TokenId next = 0;
    if (strategy == DecodeStrategy::Greedy) {
      logits.maxCoeff(&next);
    } else {
      const double max = static_cast<double>(logits.maxCoeff());
      std::vector<double> probs(static_cast<std::size_t>(logits.size()));
      double total = 0.0;
      for (Eigen::Index v = 0; v < logits.size(); ++v) {
        probs[v] = std::exp(static_cast<double>(logits(v)) - max);
        total += probs[v];
      }
      double u = unit_double(rng) * total;
      next = static_cast<TokenId>(probs.size() - 1);
      for (std::size_t v = 0; v < probs.size(); ++v) {
        if (u < probs[v]) {
          next = static_cast<TokenId>(v);
          break;
        }
        u -= probs[v];
      }
    }
    if (next == Vocab::kEos) break;
    body.push_back(next);
    current = next;
  }
  return body;
}

#define FUSELM_INSTANTIATE(S)                                                                              \
  template struct LMParamsT<S>;                                                                            \
  template StepState<S> lstm_step(const LMParamsT<S>&, const VectorT<S>&, const StepState<S>&);            \
  template StepState<S> fuse_early(const LMParamsT<S>&, const Artefact&);                                  \
  template VectorT<S> fuse_late(const LMParamsT<S>&, const VectorT<S>&, const Artefact&);                  \
  template MatrixT<S> forward_sentence(const LMParamsT<S>&, std::span<const TokenId>,                      \
                                       std::span<const Artefact>);                                         \
  template LossSummary sentence_loss(const LMParamsT<S>&, std::span<const TokenId>,                        \
                                     std::span<const Artefact>);                                           \
  template LossSummary loss_and_grads(const LMParamsT<S>&, std::span<const TokenId>,                       \
                                      std::span<const Artefact>, LMParamsT<S>&);                           \
  template std::vector<TokenId> generate(const LMParamsT<S>&, const ArtefactProvider&, std::size_t,        \
                                         std::mt19937_64&, DecodeStrategy, std::size_t);

FUSELM_INSTANTIATE(float)
FUSELM_INSTANTIATE(double)

#undef FUSELM_INSTANTIATE

}  // namespace fuselm
