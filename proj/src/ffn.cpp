#include "fuselm/ffn.hpp"

#include <type_traits>

#include "fuselm/error.hpp"
#include "fuselm/rng.hpp"

namespace fuselm {
namespace {

template <typename Scalar>
struct FfnTrace {
  MatrixT<Scalar> input;  // D x T
  MatrixT<Scalar> h1, h2, h3;
  MatrixT<Scalar> logits;
};

template <typename Scalar>
FfnTrace<Scalar> run(const FFNParamsT<Scalar>& p, std::span<const TokenId> ids,
                     std::span<const Artefact> artefacts) {
  const auto& c = p.config;
  if (ids.size() < 2) throw InputError("sentence needs at least BOS and EOS");
  const auto T = static_cast<Eigen::Index>(ids.size() - 1);
  if (artefacts.size() != ids.size() - 1) {
    throw InputError("artefact-only model needs one artefact per target");
  }
  for (const auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= c.vocab_size) throw InputError("token id out of range");
  }
  FfnTrace<Scalar> tr;
  tr.input.resize(static_cast<Eigen::Index>(c.artefact_dim), T);
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto& a = artefacts[t];
    if (a.dim() != c.artefact_dim) {
      throw ConfigError("artefact has dimension " + std::to_string(a.dim()) + ", model expects " +
                        std::to_string(c.artefact_dim));
    }
    for (std::size_t i = 0; i < a.dim(); ++i) tr.input(static_cast<Eigen::Index>(i), t) = static_cast<Scalar>(a.values[i]);
  }
  tr.h1 = ((p.w1 * tr.input).colwise() + p.b1).cwiseMax(Scalar(0));
  tr.h2 = ((p.w2 * tr.h1).colwise() + p.b2).cwiseMax(Scalar(0));
  tr.h3 = (p.w3 * tr.h2).colwise() + p.b3;
  tr.logits = (p.w_out * tr.h3).colwise() + p.b_out;
  if (!tr.logits.allFinite()) throw NumericError("artefact-only model produced non-finite logits");
  return tr;
}

template <typename Scalar>
MatrixT<Scalar> relu_mask(const MatrixT<Scalar>& activated) {
  return (activated.array() > Scalar(0)).template cast<Scalar>().matrix();
}

}  // namespace

template <typename Scalar>
FFNParamsT<Scalar> FFNParamsT<Scalar>::zeros(const ModelConfig& config) {
  config.validate();
  if (config.type != ModelType::Ffn) throw ConfigError("FFNParams needs an ffn config");
  const auto V = static_cast<Eigen::Index>(config.vocab_size);
  const auto D = static_cast<Eigen::Index>(config.artefact_dim);
  const auto W = static_cast<Eigen::Index>(config.ffn_width);
  FFNParamsT p;
  p.config = config;
  p.w1 = Matrix::Zero(W, D);
  p.b1 = Vector::Zero(W);
  p.w2 = Matrix::Zero(W, W);
  p.b2 = Vector::Zero(W);
  p.w3 = Matrix::Zero(W, W);
  p.b3 = Vector::Zero(W);
  p.w_out = Matrix::Zero(V, W);
  p.b_out = Vector::Zero(V);
  return p;
}

template <typename Scalar>
FFNParamsT<Scalar> FFNParamsT<Scalar>::init(const ModelConfig& config) {
  auto p = zeros(config);
  std::uint64_t stream = 0;
  p.for_each([&](const char*, auto& t) {
    ++stream;
    if constexpr (std::decay_t<decltype(t)>::ColsAtCompileTime != 1) {
      std::mt19937_64 rng(mix64(config.seed, stream));
      for (Eigen::Index i = 0; i < t.size(); ++i) {
        t.data()[i] = static_cast<Scalar>((2.0 * unit_double(rng) - 1.0) * 0.08);
      }
    }
  });
  return p;
}

template <typename Scalar>
std::size_t FFNParamsT<Scalar>::num_parameters() const {
  std::size_t n = 0;
  for_each([&](const char*, const auto& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

template <typename Scalar>
VectorT<Scalar> ffn_forward(const FFNParamsT<Scalar>& p, const Artefact& a) {
  const TokenId ids[] = {Vocab::kBos, Vocab::kEos};
  return run(p, ids, std::span(&a, 1)).logits.col(0);
}

template <typename Scalar>
LossSummary ffn_sentence_loss(const FFNParamsT<Scalar>& p, std::span<const TokenId> ids,
                              std::span<const Artefact> artefacts) {
  const auto tr = run(p, ids, artefacts);
  LossSummary out;
  out.tokens = ids.size() - 1;
  for (std::size_t t = 0; t < out.tokens; ++t) {
    const double nll = token_nll(tr.logits.col(static_cast<Eigen::Index>(t)), ids[t + 1]);
    out.token_nll.push_back(nll);
    out.nll += nll;
  }
  return out;
}

template <typename Scalar>
LossSummary ffn_loss_and_grads(const FFNParamsT<Scalar>& p, std::span<const TokenId> ids,
                               std::span<const Artefact> artefacts, FFNParamsT<Scalar>& g) {
  const auto tr = run(p, ids, artefacts);
  const auto T = tr.logits.cols();
  if (g.config != p.config || g.w1.size() != p.w1.size()) g = FFNParamsT<Scalar>::zeros(p.config);

  LossSummary out;
  out.tokens = static_cast<std::size_t>(T);
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
  if (!std::isfinite(out.nll)) throw NumericError("non-finite loss in artefact-only model");

  g.b_out = d_logits.rowwise().sum();
  g.w_out.noalias() = d_logits * tr.h3.transpose();
  const MatrixT<Scalar> d3 = p.w_out.transpose() * d_logits;
  g.b3 = d3.rowwise().sum();
  g.w3.noalias() = d3 * tr.h2.transpose();
  const MatrixT<Scalar> d2 = (p.w3.transpose() * d3).cwiseProduct(relu_mask<Scalar>(tr.h2));
  g.b2 = d2.rowwise().sum();
  g.w2.noalias() = d2 * tr.h1.transpose();
  const MatrixT<Scalar> d1 = (p.w2.transpose() * d2).cwiseProduct(relu_mask<Scalar>(tr.h1));
  g.b1 = d1.rowwise().sum();
  g.w1.noalias() = d1 * tr.input.transpose();
  return out;
}

#define FUSELM_INSTANTIATE(S)                                                                       \
  template struct FFNParamsT<S>;                                                                    \
  template VectorT<S> ffn_forward(const FFNParamsT<S>&, const Artefact&);                           \
  template LossSummary ffn_sentence_loss(const FFNParamsT<S>&, std::span<const TokenId>,            \
                                         std::span<const Artefact>);                                \
  template LossSummary ffn_loss_and_grads(const FFNParamsT<S>&, std::span<const TokenId>,           \
                                          std::span<const Artefact>, FFNParamsT<S>&);

FUSELM_INSTANTIATE(float)
FUSELM_INSTANTIATE(double)

#undef FUSELM_INSTANTIATE

}  // namespace fuselm
