#pragma once

#include <span>
#include <variant>

#include "fuselm/ffn.hpp"
#include "fuselm/model.hpp"
#include "fuselm/optimizer.hpp"

namespace fuselm {

class ArtefactProvider;
struct CropSpec;

// Either trainable network behind one interface, in training precision.
class Model {
 public:
  using Params = std::variant<LMParams, FFNParams>;

  explicit Model(LMParams p) : params_(std::move(p)) {}
  explicit Model(FFNParams p) : params_(std::move(p)) {}

  static Model init(const ModelConfig& config);
  static Model zeros(const ModelConfig& config);

  const ModelConfig& config() const;
  bool is_ffn() const { return std::holds_alternative<FFNParams>(params_); }
  std::size_t num_parameters() const;

  LossSummary loss(std::span<const TokenId> ids, std::span<const Artefact> artefacts) const;
  LossSummary loss_and_grads(std::span<const TokenId> ids, std::span<const Artefact> artefacts,
                             Model& grads) const;

  // Artefacts the network consumes for one sentence: none for the plain
  // LSTM, the t = 1 artefact for early fusion, one per target otherwise.
  std::vector<Artefact> artefacts_for(const ArtefactProvider& provider, std::size_t sentence_idx,
                                      std::span<const TokenId> body, const CropSpec& crop) const;

  Params& params() { return params_; }
  const Params& params() const { return params_; }

  template <typename F>
  void for_each(F&& f) {
    std::visit([&](auto& p) { p.for_each(f); }, params_);
  }
  template <typename F>
  void for_each(F&& f) const {
    std::visit([&](const auto& p) { p.for_each(f); }, params_);
  }

 private:
  Params params_;
};

struct ModelAdamState {
  Model m;
  Model v;
  std::uint64_t step = 0;

  static ModelAdamState fresh(const Model& model);
};

void adam_step(Model& params, Model& grads, ModelAdamState& state, const AdamConfig& cfg);

}  // namespace fuselm
