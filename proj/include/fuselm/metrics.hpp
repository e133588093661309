#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fuselm {

// One JSON-lines record; ppl == exp(nll) where nll is the mean per-token NLL.
struct MetricsRecord {
  std::size_t epoch = 0;
  std::string split;
  double nll = 0.0;
  double ppl = 0.0;
  double dropout_p = 0.0;
  double seconds = 0.0;

  std::string to_json() const;
  static MetricsRecord from_json(std::string_view line);
  bool operator==(const MetricsRecord&) const = default;
};

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path);

// "epoch,ppl" rows for one split.
std::string metrics_csv(const std::vector<MetricsRecord>& records, std::string_view split);

}  // namespace fuselm
