#include "fuselm/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fuselm/error.hpp"
#include "fuselm/evaluator.hpp"

namespace fuselm {
namespace {

// Serves the zero artefact for sentences whose per-sentence draw drops them.
class SentenceDropout final : public ArtefactProvider {
 public:
  SentenceDropout(const ArtefactProvider& inner, double p, std::uint64_t seed, std::size_t epoch)
      : inner_(&inner), p_(p), seed_(seed), epoch_(epoch) {}
  std::size_t dim() const override { return inner_->dim(); }
  ArtefactKind kind() const override { return inner_->kind(); }
  std::string describe() const override { return inner_->describe(); }
  Artefact artefact_for(std::size_t sentence_idx, std::span<const TokenId> body, std::size_t t,
                        const CropSpec& crop) const override {
    if (drop_artefact(p_, seed_, epoch_, sentence_idx)) return zero_artefact(dim());
    return inner_->artefact_for(sentence_idx, body, t, crop);
  }

 private:
  const ArtefactProvider* inner_;
  double p_;
  std::uint64_t seed_;
  std::size_t epoch_;
};

// Dev draws use their own stream so they do not mirror training draws.
constexpr std::uint64_t kDevDropoutSalt = 0x6465762d64726f70ULL;

double parse_probability(std::string_view text) {
  try {
    std::size_t used = 0;
    const std::string s(text);
    const double p = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing");
    return p;
  } catch (const std::exception&) {
    throw ConfigError("bad dropout probability '" + std::string(text) + "'");
  }
}

std::size_t parse_count(std::string_view text) {
  try {
    std::size_t used = 0;
    const std::string s(text);
    if (s.empty() || s[0] == '-') throw std::invalid_argument("negative");
    const auto v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing");
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("bad epoch count '" + std::string(text) + "'");
  }
}

DropoutSchedule ramp(std::size_t period, bool reversed) {
  if (period == 0) throw ConfigError("schedule period must be positive");
  DropoutSchedule s;
  s.steps.clear();
  for (std::size_t k = 0; k < 5; ++k) s.steps.emplace_back(k * period, (reversed ? 4 - k : k) * 0.25);
  return s;
}

class MetricsWriter {
 public:
  MetricsWriter(const std::filesystem::path& path, bool append) {
    if (path.empty()) return;
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw IoError("cannot write metrics to " + path.string());
  }
  void write(const MetricsRecord& r) {
    if (!out_.is_open()) return;
    out_ << r.to_json() << '\n';
    out_.flush();
    if (!out_) throw IoError("metrics write failed");
  }

 private:
  std::ofstream out_;
};

}  // namespace

double DropoutSchedule::at(std::size_t epoch) const {
  double p = 0.0;
  for (const auto& [start, prob] : steps) {
    if (start > epoch) break;
    p = prob;
  }
  return p;
}

double wean_schedule(const DropoutSchedule& schedule, std::size_t epoch) { return schedule.at(epoch); }

void DropoutSchedule::validate() const {
  if (steps.empty() || steps.front().first != 0) throw ConfigError("dropout schedule must start at epoch 0");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (!(steps[i].second >= 0.0 && steps[i].second <= 1.0)) {
      throw ConfigError("dropout probability must lie in [0, 1]");
    }
    if (i > 0 && steps[i].first <= steps[i - 1].first) {
      throw ConfigError("dropout schedule epochs must be strictly increasing");
    }
  }
}

std::string DropoutSchedule::str() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < steps.size(); ++i) os << (i ? "," : "") << steps[i].first << ':' << steps[i].second;
  return os.str();
}

DropoutSchedule DropoutSchedule::constant(double p) {
  DropoutSchedule s;
  s.steps = {{0, p}};
  s.validate();
  return s;
}

DropoutSchedule DropoutSchedule::wean_off(std::size_t period) { return ramp(period, false); }

DropoutSchedule DropoutSchedule::reverse(std::size_t period) { return ramp(period, true); }

DropoutSchedule DropoutSchedule::parse(std::string_view text) {
  if (text.empty() || text == "none") return constant(0.0);
  const auto preset = [&](std::string_view name) -> std::optional<std::size_t> {
    if (text == name) return 15;
    if (text.starts_with(name) && text.size() > name.size() + 1 && text[name.size()] == ':') {
      return parse_count(text.substr(name.size() + 1));
    }
    return std::nullopt;
  };
  if (auto period = preset("wean-off")) return wean_off(*period);
  if (auto period = preset("reverse")) return reverse(*period);
  if (text.starts_with("const:")) return constant(parse_probability(text.substr(6)));
  DropoutSchedule s;
  s.steps.clear();
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    const auto item = text.substr(start, end - start);
    const auto colon = item.find(':');
    if (colon == std::string_view::npos) {
      throw ConfigError("dropout schedule must be none | wean-off[:N] | reverse[:N] | const:<p> | <epoch>:<p>,...");
    }
    s.steps.emplace_back(parse_count(item.substr(0, colon)), parse_probability(item.substr(colon + 1)));
    start = end + 1;
  }
  s.validate();
  return s;
}

void TrainConfig::validate() const {
  model.validate();
  adam.validate();
  dropout.validate();
  if (eval_every == 0) throw ConfigError("eval-every must be positive");
  if (threads == 0) throw ConfigError("threads must be positive");
  if (crop.pct_milli > 1000) throw ConfigError("crop fraction above 100%");
}

std::optional<MetricsRecord> TrainResult::last_dev() const {
  for (auto it = metrics.rbegin(); it != metrics.rend(); ++it) {
    if (it->split == "dev") return *it;
  }
  return std::nullopt;
}

std::pair<double, std::size_t> train_epoch(Model& model, ModelAdamState& adam, const TrainConfig& config,
                                           const Corpus& corpus, const Vocab& vocab,
                                           const ArtefactProvider& provider, std::size_t epoch) {
  const auto seed = config.model.seed;
  const double p = config.dropout.at(epoch);
  const auto order = epoch_order(corpus.size(), config.shuffle, seed, epoch);
  auto grads = Model::zeros(model.config());
  double nll = 0.0;
  std::size_t tokens = 0;
  for (const auto idx : order) {
    const auto batch = make_batch(vocab, idx, corpus.sentences[idx]);
    auto artefacts = model.artefacts_for(provider, idx, batch.body(), config.crop);
    if (!artefacts.empty() && drop_artefact(p, seed, epoch, idx)) {
      for (auto& a : artefacts) a = zero_artefact(a.dim());
    }
    LossSummary loss;
    try {
      loss = model.loss_and_grads(batch.ids, artefacts, grads);
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + ", sentence " + std::to_string(idx) + ": " + e.what());
    }
    if (!std::isfinite(loss.nll)) {
      throw NumericError("epoch " + std::to_string(epoch) + ", sentence " + std::to_string(idx) + ": non-finite loss");
    }
    adam_step(model, grads, adam, config.adam);
    nll += loss.nll;
    tokens += loss.tokens;
  }
  return {nll, tokens};
}

TrainResult train(const TrainConfig& config, const TrainInputs& inputs, std::optional<Checkpoint> resume,
                  const MetricsCallback& on_record) {
  config.validate();
  Corpus corpus = inputs.train;
  if (config.limit && *config.limit < corpus.size()) corpus.sentences.resize(*config.limit);
  if (corpus.empty()) throw InputError("training corpus is empty");
  if (inputs.provider.dim() != config.model.artefact_dim) {
    throw ConfigError("provider " + inputs.provider.describe() + " yields dimension " +
                      std::to_string(inputs.provider.dim()) + " but the model expects " +
                      std::to_string(config.model.artefact_dim));
  }
  if (config.model.vocab_size != inputs.vocab.size()) {
    throw ConfigError("model vocab_size " + std::to_string(config.model.vocab_size) + " differs from vocabulary size " +
                      std::to_string(inputs.vocab.size()));
  }
  const auto* dev_provider = inputs.dev_provider ? inputs.dev_provider : &inputs.provider;

  std::size_t start_epoch = 0;
  auto model = Model::init(config.model);
  auto adam = ModelAdamState::fresh(model);
  if (resume) {
    if (resume->model.config() != config.model) throw ConfigError("checkpoint was trained with a different model config");
    model = std::move(resume->model);
    adam = resume->adam ? std::move(*resume->adam) : ModelAdamState::fresh(model);
    start_epoch = resume->epochs_completed;
  }

  MetricsWriter writer(config.metrics_path, resume.has_value());
  TrainResult result{std::move(model), std::move(adam), {}, start_epoch};
  const auto emit = [&](MetricsRecord r) {
    writer.write(r);
    if (on_record) on_record(r);
    result.metrics.push_back(std::move(r));
  };

  for (std::size_t epoch = start_epoch; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto [nll, tokens] =
        train_epoch(result.model, result.adam, config, corpus, inputs.vocab, inputs.provider, epoch);
    const auto seconds = [&] {
      if (!config.record_time) return 0.0;
      return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    const double mean = nll / static_cast<double>(tokens);
    emit({epoch, "train", mean, std::exp(mean), config.dropout.at(epoch), seconds()});

    if (inputs.dev != nullptr && ((epoch + 1) % config.eval_every == 0 || epoch + 1 == config.epochs)) {
      const auto t1 = std::chrono::steady_clock::now();
      EvalOptions opts;
      opts.crop = config.crop;
      opts.threads = config.threads;
      opts.keep_token_nll = false;
      const double p = config.dev_dropout ? config.dropout.at(epoch) : 0.0;
      const SentenceDropout dropped(*dev_provider, p, config.model.seed ^ kDevDropoutSalt, epoch);
      const auto report = perplexity(result.model, *inputs.dev, inputs.vocab, dropped, opts);
      const double dev_seconds =
          config.record_time ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count() : 0.0;
      emit({epoch, "dev", report.mean_nll(), report.ppl, p, dev_seconds});
    }
    result.epochs_completed = epoch + 1;
    if (!config.checkpoint_path.empty()) {
      save_checkpoint(config.checkpoint_path, Checkpoint{result.model, result.adam, result.epochs_completed});
    }
  }
  return result;
}

}  // namespace fuselm
