#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "encfree/cli/config.hpp"
#include "encfree/numkit/errors.hpp"
#include "encfree/trainers/metrics.hpp"

namespace encfree::cli {

struct CurvePoint {
  std::string series;  // e.g. "train_loss", "test_pcc"
  std::size_t x = 0;   // epoch
  double y = 0.0;
  std::uint64_t seed = 0;
};

// Reads one metrics.csv into long-format points.
inline std::vector<CurvePoint> read_metrics(const std::string& csv_text, std::uint64_t seed, const std::string& what) {
  std::istringstream in(csv_text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("epoch,split,loss,pcc_mean", 0) != 0) {
    throw FormatError(what + ": not a metrics CSV");
  }
  std::vector<CurvePoint> pts;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    if (cells.size() < 4) throw FormatError(what + ": short row '" + line + "'");
    try {
      const std::size_t epoch = std::stoul(cells[0]);
      pts.push_back({cells[1] + "_loss", epoch, std::stod(cells[2]), seed});
      if (!cells[3].empty()) pts.push_back({cells[1] + "_pcc", epoch, std::stod(cells[3]), seed});
    } catch (const std::logic_error&) {
      throw FormatError(what + ": unreadable row '" + line + "'");
    }
  }
  if (pts.empty()) throw FormatError(what + ": no metric rows");
  return pts;
}

struct CurveAggregate {
  std::string series;
  std::size_t x = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample sd (n - 1); 0 for a single run
  std::size_t count = 0;
};

inline std::vector<CurveAggregate> aggregate(const std::vector<CurvePoint>& pts) {
  std::map<std::pair<std::string, std::size_t>, std::vector<double>> groups;
  for (const auto& p : pts) groups[{p.series, p.x}].push_back(p.y);
  std::vector<CurveAggregate> out;
  for (const auto& [key, ys] : groups) {
    double mean = 0.0;
    for (double y : ys) mean += y;
    mean /= double(ys.size());
    double ss = 0.0;
    for (double y : ys) ss += (y - mean) * (y - mean);
    out.push_back({key.first, key.second, mean, ys.size() > 1 ? std::sqrt(ss / double(ys.size() - 1)) : 0.0,
                   ys.size()});
  }
  return out;
}

inline std::string curves_csv(const std::vector<CurvePoint>& pts) {
  std::ostringstream os;
  os << "series,x,y,seed\n";
  for (const auto& p : pts) os << p.series << ',' << p.x << ',' << trainers::format_double(p.y) << ',' << p.seed << '\n';
  return os.str();
}

inline std::string aggregate_csv(const std::vector<CurveAggregate>& agg) {
  std::ostringstream os;
  os << "series,x,mean,sd,count\n";
  for (const auto& a : agg) {
    os << a.series << ',' << a.x << ',' << trainers::format_double(a.mean) << ',' << trainers::format_double(a.sd)
       << ',' << a.count << '\n';
  }
  return os.str();
}

namespace detail {

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw MissingFileError("cannot open " + p.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

inline std::uint64_t run_seed(const std::filesystem::path& dir) {
  const auto summary = dir / "summary.json";
  if (std::filesystem::exists(summary)) {
    try {
      const json j = json::parse(slurp(summary));
      if (j.contains("seed") && j["seed"].is_number_unsigned()) return j["seed"].get<std::uint64_t>();
    } catch (const json::parse_error&) {
    }
  }
  const std::string name = dir.filename().string();
  if (name.rfind("seed-", 0) == 0) {
    try {
      return std::stoull(name.substr(5));
    } catch (const std::logic_error&) {
    }
  }
  return 0;
}

}  // namespace detail

// Collects run_dir/metrics.csv and run_dir/*/metrics.csv (seed sweeps),
// then writes curves.csv and curves_summary.csv into `out`.
inline void emit_curves(const std::filesystem::path& run_dir, const std::filesystem::path& out) {
  if (!std::filesystem::is_directory(run_dir)) throw MissingFileError("no such run directory " + run_dir.string());
  std::vector<std::filesystem::path> dirs;
  if (std::filesystem::exists(run_dir / "metrics.csv")) dirs.push_back(run_dir);
  for (const auto& e : std::filesystem::directory_iterator(run_dir))
    if (e.is_directory() && std::filesystem::exists(e.path() / "metrics.csv")) dirs.push_back(e.path());
  if (dirs.empty()) throw MissingFileError("no metrics.csv under " + run_dir.string());
  std::sort(dirs.begin(), dirs.end());
  std::vector<CurvePoint> pts;
  for (const auto& d : dirs) {
    const auto more = read_metrics(detail::slurp(d / "metrics.csv"), detail::run_seed(d), (d / "metrics.csv").string());
    pts.insert(pts.end(), more.begin(), more.end());
  }
  std::filesystem::create_directories(out);
  const std::string a = curves_csv(pts), b = aggregate_csv(aggregate(pts));
  std::ofstream((out / "curves.csv").string(), std::ios::binary) << a;
  std::ofstream((out / "curves_summary.csv").string(), std::ios::binary) << b;
}

}  // namespace encfree::cli
