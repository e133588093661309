#include "fuselm/network.hpp"

#include "fuselm/error.hpp"
#include "fuselm/providers.hpp"

namespace fuselm {

Model Model::init(const ModelConfig& config) {
  if (config.type == ModelType::Ffn) return Model(FFNParams::init(config));
  return Model(LMParams::init(config));
}

Model Model::zeros(const ModelConfig& config) {
  if (config.type == ModelType::Ffn) return Model(FFNParams::zeros(config));
  return Model(LMParams::zeros(config));
}

const ModelConfig& Model::config() const {
  return std::visit([](const auto& p) -> const ModelConfig& { return p.config; }, params_);
}

std::size_t Model::num_parameters() const {
  return std::visit([](const auto& p) { return p.num_parameters(); }, params_);
}

LossSummary Model::loss(std::span<const TokenId> ids, std::span<const Artefact> artefacts) const {
  if (const auto* f = std::get_if<FFNParams>(&params_)) return ffn_sentence_loss(*f, ids, artefacts);
  return sentence_loss(std::get<LMParams>(params_), ids, artefacts);
}

LossSummary Model::loss_and_grads(std::span<const TokenId> ids, std::span<const Artefact> artefacts,
                                  Model& grads) const {
  if (grads.params_.index() != params_.index()) grads = zeros(config());
  if (const auto* f = std::get_if<FFNParams>(&params_)) {
    return ffn_loss_and_grads(*f, ids, artefacts, std::get<FFNParams>(grads.params_));
  }
  return fuselm::loss_and_grads(std::get<LMParams>(params_), ids, artefacts, std::get<LMParams>(grads.params_));
}

std::vector<Artefact> Model::artefacts_for(const ArtefactProvider& provider, std::size_t sentence_idx,
                                           std::span<const TokenId> body, const CropSpec& crop) const {
  const auto& c = config();
  if (provider.dim() != c.artefact_dim) {
    throw ConfigError("provider " + provider.describe() + " yields dimension " + std::to_string(provider.dim()) +
                      " but the model expects " + std::to_string(c.artefact_dim));
  }
  if (c.type == ModelType::Lstm && c.mode == FusionMode::None) return {};
  if (c.type == ModelType::Lstm && is_early(c.mode)) {
    return {provider.artefact_for(sentence_idx, body, 1, crop)};
  }
  return provider.sentence_artefacts(sentence_idx, body, crop);
}

ModelAdamState ModelAdamState::fresh(const Model& model) {
  return {Model::zeros(model.config()), Model::zeros(model.config()), 0};
}

void adam_step(Model& params, Model& grads, ModelAdamState& state, const AdamConfig& cfg) {
  std::visit(
      [&](auto& p) {
        using P = std::decay_t<decltype(p)>;
        auto* g = std::get_if<P>(&grads.params());
        auto* m = std::get_if<P>(&state.m.params());
        auto* v = std::get_if<P>(&state.v.params());
        if (g == nullptr || m == nullptr || v == nullptr) throw ConfigError("optimizer state does not match the model type");
        AdamState<P> s{std::move(*m), std::move(*v), state.step};
        try {
          fuselm::adam_step(p, *g, s, cfg);
        } catch (...) {
          *m = std::move(s.m);
          *v = std::move(s.v);
          throw;
        }
        *m = std::move(s.m);
        *v = std::move(s.v);
        state.step = s.step;
      },
      params.params());
}

}  // namespace fuselm
