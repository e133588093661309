#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fuselm/checkpoint.hpp"
#include "fuselm/corpus.hpp"
#include "fuselm/metrics.hpp"
#include "fuselm/network.hpp"
#include "fuselm/providers.hpp"

namespace fuselm {

// Step function of artefact dropout probability over epochs.
struct DropoutSchedule {
  // (first epoch, p), first epochs strictly increasing and starting at 0.
  std::vector<std::pair<std::size_t, double>> steps{{0, 0.0}};

  double at(std::size_t epoch) const;
  void validate() const;
  std::string str() const;

  static DropoutSchedule constant(double p);
  // p = 0, .25, .5, .75, 1 for consecutive blocks of `period` epochs.
  static DropoutSchedule wean_off(std::size_t period = 15);
  static DropoutSchedule reverse(std::size_t period = 15);
  // "none" | "wean-off[:period]" | "reverse[:period]" | "const:<p>" |
  // "<epoch>:<p>,<epoch>:<p>,..."
  static DropoutSchedule parse(std::string_view text);

  bool operator==(const DropoutSchedule&) const = default;
};

double wean_schedule(const DropoutSchedule& schedule, std::size_t epoch);

struct TrainConfig {
  ModelConfig model;
  std::size_t epochs = 1;
  AdamConfig adam;
  CropSpec crop;
  DropoutSchedule dropout;
  std::optional<std::size_t> limit;  // keep the first `limit` training sentences
  std::size_t eval_every = 1;
  bool shuffle = true;
  // When false every record reports 0 seconds, which makes metrics files
  // byte-comparable across runs.
  bool record_time = true;
  // Dev evaluation drops artefacts with the epoch's probability, so dev
  // curves reflect the access the schedule allows.
  bool dev_dropout = true;
  std::size_t threads = 1;  // dev evaluation only
  std::filesystem::path checkpoint_path;
  std::filesystem::path metrics_path;

  void validate() const;
};

struct TrainResult {
  Model model;
  ModelAdamState adam;
  std::vector<MetricsRecord> metrics;
  std::size_t epochs_completed = 0;

  // Last dev record, if any.
  std::optional<MetricsRecord> last_dev() const;
};

struct TrainInputs {
  const Corpus& train;
  const Vocab& vocab;
  const ArtefactProvider& provider;
  const Corpus* dev = nullptr;
  // Defaults to `provider`; differs when dev artefacts live in their own store.
  const ArtefactProvider* dev_provider = nullptr;
};

using MetricsCallback = std::function<void(const MetricsRecord&)>;

// Per-sentence Adam training. Emits a train record every epoch and a dev
// record every `eval_every` epochs and after the last one. When a checkpoint
// path is set it is rewritten atomically after every epoch. `resume`
// continues from a checkpoint's epoch counter and optimizer state.
TrainResult train(const TrainConfig& config, const TrainInputs& inputs, std::optional<Checkpoint> resume = {},
                  const MetricsCallback& on_record = {});

// Runs one epoch in place; returns the summed NLL and target count.
std::pair<double, std::size_t> train_epoch(Model& model, ModelAdamState& adam, const TrainConfig& config,
                                           const Corpus& corpus, const Vocab& vocab,
                                           const ArtefactProvider& provider, std::size_t epoch);

}  // namespace fuselm
