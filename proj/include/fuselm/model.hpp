#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstddef>
#include <limits>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "fuselm/artefact.hpp"
#include "fuselm/bpe.hpp"

namespace fuselm {

enum class FusionMode : std::uint8_t {
  None = 0,
  EarlyH0 = 1,
  EarlyC0 = 2,
  EarlyBoth = 3,
  LateConcat = 4,
  LateAdd = 5,
  LateMul = 6,
};

const char* to_string(FusionMode mode);
FusionMode parse_fusion_mode(std::string_view name);
inline bool is_early(FusionMode m) { return m >= FusionMode::EarlyH0 && m <= FusionMode::EarlyBoth; }
inline bool is_late(FusionMode m) { return m >= FusionMode::LateConcat; }

enum class ModelType : std::uint8_t { Lstm = 0, Ffn = 1 };

const char* to_string(ModelType type);

// Architecture of either the fusion LSTM or the artefact-only FFN.
struct ModelConfig {
  ModelType type = ModelType::Lstm;
  std::size_t vocab_size = Vocab::kDefaultSize;
  std::size_t embed_dim = 512;
  std::size_t hidden_dim = 256;
  std::size_t artefact_dim = 768;
  std::size_t ffn_width = 768;
  FusionMode mode = FusionMode::LateConcat;
  std::uint64_t seed = 1;

  // Width of the vector fed to the output projection.
  std::size_t fused_dim() const {
    return mode == FusionMode::LateConcat ? hidden_dim + artefact_dim : hidden_dim;
  }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Trainable tensors of the fusion LSTM. Fusion matrices that the mode does
// not use stay empty (0 x 0) and are skipped by for_each/zip.
template <typename Scalar>
struct LMParamsT {
  using Matrix = MatrixT<Scalar>;
  using Vector = VectorT<Scalar>;

  ModelConfig config;
  Matrix embed_in;   // V x d_e
  Matrix w_x;        // 4H x d_e, gate blocks ordered (i, f, g, o)
  Matrix w_h;        // 4H x H
  Vector bias;       // 4H
  Matrix early_h;    // H x D
  Matrix early_c;    // H x D
  Matrix late;       // H x D, late-add / late-mul
  Matrix proj;       // d_e x fused_dim
  Matrix embed_out;  // V x d_e
  Vector bias_out;   // V

  // Correctly shaped, all zeros.
  static LMParamsT zeros(const ModelConfig& config);
  // Weights uniform in [-0.08, 0.08] from config.seed; biases zero except the
  // forget gate, which starts at 1.
  static LMParamsT init(const ModelConfig& config);

  static constexpr auto tensors() {
    return std::make_tuple(
        std::pair{"embed_in", &LMParamsT::embed_in}, std::pair{"lstm_w_x", &LMParamsT::w_x},
        std::pair{"lstm_w_h", &LMParamsT::w_h}, std::pair{"lstm_bias", &LMParamsT::bias},
        std::pair{"early_h", &LMParamsT::early_h}, std::pair{"early_c", &LMParamsT::early_c},
        std::pair{"late", &LMParamsT::late}, std::pair{"proj", &LMParamsT::proj},
        std::pair{"embed_out", &LMParamsT::embed_out}, std::pair{"bias_out", &LMParamsT::bias_out});
  }

  // Calls f(name, tensor_of_first, tensor_of_second, ...) for every tensor
  // that is present in `first`.
  template <typename F, typename First, typename... Rest>
  static void zip(F&& f, First& first, Rest&... rest) {
    auto visit = [&](auto member) {
      if ((first.*(member.second)).size() > 0) f(member.first, first.*(member.second), rest.*(member.second)...);
    };
    std::apply([&](auto... member) { (visit(member), ...); }, tensors());
  }

  template <typename F>
  void for_each(F&& f) {
    zip(std::forward<F>(f), *this);
  }
  template <typename F>
  void for_each(F&& f) const {
    zip(std::forward<F>(f), *this);
  }

  void set_zero();
  std::size_t num_parameters() const;

  template <typename Other>
  LMParamsT<Other> cast() const {
    LMParamsT<Other> out;
    out.config = config;
    out.embed_in = embed_in.template cast<Other>();
    out.w_x = w_x.template cast<Other>();
    out.w_h = w_h.template cast<Other>();
    out.bias = bias.template cast<Other>();
    out.early_h = early_h.template cast<Other>();
    out.early_c = early_c.template cast<Other>();
    out.late = late.template cast<Other>();
    out.proj = proj.template cast<Other>();
    out.embed_out = embed_out.template cast<Other>();
    out.bias_out = bias_out.template cast<Other>();
    return out;
  }
};

using LMParams = LMParamsT<float>;

template <typename Scalar>
struct StepState {
  VectorT<Scalar> h;
  VectorT<Scalar> c;
};

// One LSTM cell update. Throws NumericError on non-finite output.
template <typename Scalar>
StepState<Scalar> lstm_step(const LMParamsT<Scalar>& params, const VectorT<Scalar>& x,
                            const StepState<Scalar>& state);

// Initial (h0, c0) for early modes; zeros for every other mode.
template <typename Scalar>
StepState<Scalar> fuse_early(const LMParamsT<Scalar>& params, const Artefact& a);

// Combines a hidden state with the artefact according to the late mode.
template <typename Scalar>
VectorT<Scalar> fuse_late(const LMParamsT<Scalar>& params, const VectorT<Scalar>& h, const Artefact& a);

// Logits for every target of a [BOS ... EOS] sentence: column t scores
// ids[t + 1]. Artefacts: one per target for late modes; for early modes
// either one, or one per target with identical values; ignored for none.
template <typename Scalar>
MatrixT<Scalar> forward_sentence(const LMParamsT<Scalar>& params, std::span<const TokenId> ids,
                                 std::span<const Artefact> artefacts);

struct LossSummary {
  double nll = 0.0;  // summed over targets
  std::size_t tokens = 0;
  std::vector<double> token_nll;
};

// Summed cross-entropy and its exact gradient (BPTT through the whole
// sentence, fusion projections included). `grads` is resized and
// overwritten. Artefacts are constants: no gradient reaches them.
template <typename Scalar>
LossSummary loss_and_grads(const LMParamsT<Scalar>& params, std::span<const TokenId> ids,
                           std::span<const Artefact> artefacts, LMParamsT<Scalar>& grads);

// Forward-only loss.
template <typename Scalar>
LossSummary sentence_loss(const LMParamsT<Scalar>& params, std::span<const TokenId> ids,
                          std::span<const Artefact> artefacts);

// Numerically stable -log softmax(logits)[target], accumulated in double.
template <typename Derived>
double token_nll(const Eigen::MatrixBase<Derived>& logits, TokenId target);

enum class DecodeStrategy { Greedy, Sample };

class ArtefactProvider;

// Autoregressive decoding from BOS. Returns the generated body (no BOS/EOS);
// stops at EOS or after max_len tokens. Artefacts come from `provider` for
// the growing prefix (sentence_idx selects the store record set).
template <typename Scalar>
std::vector<TokenId> generate(const LMParamsT<Scalar>& params, const ArtefactProvider& provider,
                              std::size_t max_len, std::mt19937_64& rng, DecodeStrategy strategy,
                              std::size_t sentence_idx = 0);

template <typename Derived>
double token_nll(const Eigen::MatrixBase<Derived>& logits, TokenId target) {
  double max = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < logits.size(); ++i) max = std::max(max, double(logits(i)));
  double sum = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) sum += std::exp(double(logits(i)) - max);
  return max + std::log(sum) - double(logits(target));
}

}  // namespace fuselm
