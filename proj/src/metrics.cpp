#include "fuselm/metrics.hpp"

#include <json.hpp>
#include <sstream>

#include "fuselm/binary_io.hpp"
#include "fuselm/error.hpp"

namespace fuselm {

std::string MetricsRecord::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["split"] = split;
  j["nll"] = nll;
  j["ppl"] = ppl;
  j["dropout_p"] = dropout_p;
  j["seconds"] = seconds;
  return j.dump();
}

MetricsRecord MetricsRecord::from_json(std::string_view line) {
  try {
    const auto j = nlohmann::json::parse(line);
    MetricsRecord r;
    r.epoch = j.at("epoch").get<std::size_t>();
    r.split = j.at("split").get<std::string>();
    r.nll = j.at("nll").get<double>();
    r.ppl = j.at("ppl").get<double>();
    r.dropout_p = j.at("dropout_p").get<double>();
    r.seconds = j.at("seconds").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad metrics record: ") + e.what());
  }
}

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path) {
  std::istringstream in(binary::read_file(path));
  std::vector<MetricsRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(MetricsRecord::from_json(line));
  }
  return out;
}

std::string metrics_csv(const std::vector<MetricsRecord>& records, std::string_view split) {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,ppl\n";
  for (const auto& r : records) {
    if (r.split == split) os << r.epoch << ',' << r.ppl << '\n';
  }
  return os.str();
}

}  // namespace fuselm
