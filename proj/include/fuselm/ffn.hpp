#pragma once

#include <span>
#include <tuple>
#include <utility>

#include "fuselm/model.hpp"

namespace fuselm {

// Position-blind predictor that sees only the artefact:
// three dense layers of width W (ReLU between them), then a linear map to V.
template <typename Scalar>
struct FFNParamsT {
  using Matrix = MatrixT<Scalar>;
  using Vector = VectorT<Scalar>;

  ModelConfig config;
  Matrix w1;  // W x D
  Vector b1;
  Matrix w2;  // W x W
  Vector b2;
  Matrix w3;  // W x W
  Vector b3;
  Matrix w_out;  // V x W
  Vector b_out;

  static FFNParamsT zeros(const ModelConfig& config);
  static FFNParamsT init(const ModelConfig& config);

  static constexpr auto tensors() {
    return std::make_tuple(std::pair{"ffn_w1", &FFNParamsT::w1}, std::pair{"ffn_b1", &FFNParamsT::b1},
                           std::pair{"ffn_w2", &FFNParamsT::w2}, std::pair{"ffn_b2", &FFNParamsT::b2},
                           std::pair{"ffn_w3", &FFNParamsT::w3}, std::pair{"ffn_b3", &FFNParamsT::b3},
                           std::pair{"ffn_w_out", &FFNParamsT::w_out},
                           std::pair{"ffn_b_out", &FFNParamsT::b_out});
  }

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

  std::size_t num_parameters() const;
};

using FFNParams = FFNParamsT<float>;

template <typename Scalar>
VectorT<Scalar> ffn_forward(const FFNParamsT<Scalar>& params, const Artefact& a);

// Summed NLL over the targets ids[1..]; artefacts[t] conditions target t+1.
template <typename Scalar>
LossSummary ffn_loss_and_grads(const FFNParamsT<Scalar>& params, std::span<const TokenId> ids,
                               std::span<const Artefact> artefacts, FFNParamsT<Scalar>& grads);

template <typename Scalar>
LossSummary ffn_sentence_loss(const FFNParamsT<Scalar>& params, std::span<const TokenId> ids,
                              std::span<const Artefact> artefacts);

}  // namespace fuselm
