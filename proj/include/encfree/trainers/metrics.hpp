#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "encfree/numkit/errors.hpp"

namespace encfree::trainers {

struct MetricRecord {
  std::size_t epoch = 0;
  std::string split;  // "train", "test", ...
  double loss = 0.0;
  std::optional<double> pcc_mean;
  double seconds = 0.0;
};

// Round-trippable text for a double.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Per-epoch metrics of one run. Within a split, epochs are strictly
// increasing and appear once.
class MetricsLog {
 public:
  std::uint64_t seed = 0;
  std::string config_hash;
  bool record_time = false;  // wall time makes the CSV non-reproducible, so it is opt-in

  void add(MetricRecord r) {
    auto it = last_epoch_.find(r.split);
    if (it != last_epoch_.end() && r.epoch <= it->second) {
      throw ContractError("metrics: epoch " + std::to_string(r.epoch) + " for split '" + r.split +
                          "' is not after " + std::to_string(it->second));
    }
    last_epoch_[r.split] = r.epoch;
    records_.push_back(std::move(r));
  }

  const std::vector<MetricRecord>& records() const { return records_; }

  std::vector<MetricRecord> split(const std::string& name) const {
    std::vector<MetricRecord> out;
    for (const auto& r : records_)
      if (r.split == name) out.push_back(r);
    return out;
  }

  std::optional<MetricRecord> last(const std::string& name) const {
    for (auto it = records_.rbegin(); it != records_.rend(); ++it)
      if (it->split == name) return *it;
    return std::nullopt;
  }

  // Columns: epoch,split,loss,pcc_mean,seconds
  std::string to_csv() const {
    std::ostringstream os;
    os << "epoch,split,loss,pcc_mean,seconds\n";
    for (const auto& r : records_) {
      os << r.epoch << ',' << r.split << ',' << format_double(r.loss) << ','
         << (r.pcc_mean ? format_double(*r.pcc_mean) : std::string()) << ','
         << (record_time ? format_double(r.seconds) : std::string("0")) << '\n';
    }
    return os.str();
  }

  void write_csv(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("metrics: cannot write " + path);
    f << to_csv();
  }

 private:
  std::vector<MetricRecord> records_;
  std::map<std::string, std::size_t> last_epoch_;
};

// True when the loss w epochs later never exceeds the current one, i.e. the
// w-epoch moving average of the split's loss is non-increasing.
inline bool moving_average_nonincreasing(const MetricsLog& log, const std::string& split, std::size_t window,
                                         double rel_slack = 0.0) {
  const auto recs = log.split(split);
  for (std::size_t t = 0; t + window < recs.size(); ++t) {
    if (recs[t + window].loss > recs[t].loss * (1.0 + rel_slack)) return false;
  }
  return true;
}

}  // namespace encfree::trainers
