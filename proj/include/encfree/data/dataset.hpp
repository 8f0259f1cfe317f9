#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "encfree/data/binary.hpp"
#include "encfree/numkit/rng.hpp"
#include "encfree/trainers/metrics.hpp"

namespace encfree::data {

using numkit::Shape;
using numkit::Tensor;

struct Dataset {
  Tensor x;  // [N, ...]
  std::optional<std::vector<std::int64_t>> labels;
  std::optional<Tensor> z_true;     // [N, m]
  std::optional<Tensor> adjacency;  // [n, m]
  std::optional<Tensor> weights;    // [n, m]
  std::vector<std::uint64_t> sample_ids;
  double value_lo = 0.0;
  double value_hi = 0.0;

  std::size_t size() const { return x.rows(); }
};

inline void validate(const Dataset& ds) {
  const std::size_t n = ds.x.rows();
  if (ds.sample_ids.size() != n) throw ConsistencyError("dataset: sample_ids do not match sample count");
  std::set<std::uint64_t> unique(ds.sample_ids.begin(), ds.sample_ids.end());
  if (unique.size() != n) throw ConsistencyError("dataset: sample_ids are not unique");
  if (ds.labels && ds.labels->size() != n) throw ConsistencyError("dataset: label count mismatch");
  if (ds.z_true && ds.z_true->rows() != n) throw ConsistencyError("dataset: z_true row count mismatch");
}

// Rows at the given positions, in the given order.
inline Dataset select(const Dataset& ds, const std::vector<std::size_t>& positions) {
  Dataset out;
  out.x = ds.x.gather_rows(positions);
  if (ds.z_true) out.z_true = ds.z_true->gather_rows(positions);
  if (ds.labels) {
    out.labels.emplace();
    for (std::size_t p : positions) out.labels->push_back(ds.labels->at(p));
  }
  out.adjacency = ds.adjacency;
  out.weights = ds.weights;
  for (std::size_t p : positions) out.sample_ids.push_back(ds.sample_ids.at(p));
  out.value_lo = ds.value_lo;
  out.value_hi = ds.value_hi;
  return out;
}

// Seeded sampling without replacement. In balanced mode `count` is per
// label. The result keeps the original order of sample_ids.
inline Dataset subsample(const Dataset& ds, std::size_t count, std::uint64_t seed, bool balanced) {
  numkit::Rng rng(seed);
  std::vector<std::size_t> chosen;
  if (!balanced) {
    if (count > ds.size()) {
      throw SizeError("subsample: requested " + std::to_string(count) + " of " + std::to_string(ds.size()));
    }
    auto perm = rng.permutation(ds.size());
    chosen.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(count));
  } else {
    if (!ds.labels) throw ConsistencyError("subsample: balanced mode needs labels");
    std::map<std::int64_t, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < ds.size(); ++i) by_label[(*ds.labels)[i]].push_back(i);
    for (const auto& [label, members] : by_label) {
      if (members.size() < count) {
        throw SizeError("subsample: label " + std::to_string(label) + " has " + std::to_string(members.size()) +
                        " samples, " + std::to_string(count) + " requested");
      }
      auto perm = rng.permutation(members.size());
      for (std::size_t k = 0; k < count; ++k) chosen.push_back(members[perm[k]]);
    }
  }
  std::sort(chosen.begin(), chosen.end(),
            [&](std::size_t a, std::size_t b) { return ds.sample_ids[a] < ds.sample_ids[b]; });
  return select(ds, chosen);
}

// Everything in ds whose sample_id is not in `taken`.
inline Dataset complement(const Dataset& ds, const Dataset& taken) {
  std::set<std::uint64_t> used(taken.sample_ids.begin(), taken.sample_ids.end());
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (!used.count(ds.sample_ids[i])) keep.push_back(i);
  return select(ds, keep);
}

// ---- binary container -------------------------------------------------------

inline constexpr char kDatasetMagic[8] = {'E', 'N', 'C', 'F', 'D', 'S', 'E', 'T'};
inline constexpr std::uint32_t kDatasetVersion = 1;

enum DatasetFlags : std::uint32_t {
  kHasLabels = 1u << 0,
  kHasZTrue = 1u << 1,
  kHasAdjacency = 1u << 2,
  kHasWeights = 1u << 3,
};

inline std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  validate(ds);
  ByteWriter w;
  w.raw(kDatasetMagic, 8);
  w.u32(kDatasetVersion);
  std::uint32_t flags = 0;
  if (ds.labels) flags |= kHasLabels;
  if (ds.z_true) flags |= kHasZTrue;
  if (ds.adjacency) flags |= kHasAdjacency;
  if (ds.weights) flags |= kHasWeights;
  w.u32(flags);
  w.shape(ds.x.shape());
  w.f64(ds.value_lo);
  w.f64(ds.value_hi);
  w.u64(w.checksum());
  const std::size_t payload_start = w.size();
  for (std::uint64_t id : ds.sample_ids) w.u64(id);
  for (double v : ds.x.values()) w.f64(v);
  if (ds.labels)
    for (std::int64_t l : *ds.labels) w.i64(l);
  if (ds.z_true) w.tensor(*ds.z_true);
  if (ds.adjacency) w.tensor(*ds.adjacency);
  if (ds.weights) w.tensor(*ds.weights);
  w.u64(w.checksum(payload_start));
  return w.bytes();
}

inline Dataset decode_dataset(std::vector<std::uint8_t> bytes, const std::string& what = "dataset") {
  ByteReader r(std::move(bytes), what);
  char magic[8];
  r.raw(magic, 8);
  if (!std::equal(magic, magic + 8, kDatasetMagic)) throw FormatError(what + ": bad magic");
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion) {
    throw VersionError(what + ": unsupported version " + std::to_string(version));
  }
  const std::uint32_t flags = r.u32();
  if (flags & ~0xFu) throw FormatError(what + ": unknown flag bits");
  Shape shape = r.shape();
  if (shape.empty()) throw FormatError(what + ": X must have a sample axis");
  Dataset ds;
  ds.value_lo = r.f64();
  ds.value_hi = r.f64();
  const std::size_t header_end = r.pos();
  if (r.u64() != r.checksum(0, header_end)) throw FormatError(what + ": header checksum mismatch");

  const std::size_t payload_start = r.pos();
  const std::size_t n = shape[0];
  const std::size_t count = numkit::shape_size(shape);
  if (n > r.remaining() / 8 || count > r.remaining() / 8) throw LengthError(what + ": payload too short");
  ds.sample_ids.resize(n);
  for (auto& id : ds.sample_ids) id = r.u64();
  std::vector<double> values(count);
  for (auto& v : values) v = r.f64();
  ds.x = Tensor(std::move(shape), std::move(values));
  if (flags & kHasLabels) {
    ds.labels.emplace(n);
    for (auto& l : *ds.labels) l = r.i64();
  }
  if (flags & kHasZTrue) ds.z_true = r.tensor();
  if (flags & kHasAdjacency) ds.adjacency = r.tensor();
  if (flags & kHasWeights) ds.weights = r.tensor();
  const std::size_t payload_end = r.pos();
  if (r.u64() != r.checksum(payload_start, payload_end)) throw FormatError(what + ": payload checksum mismatch");
  if (!r.at_end()) throw FormatError(what + ": trailing bytes");
  validate(ds);
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) { write_file(path, encode_dataset(ds)); }

inline Dataset load_dataset(const std::string& path) { return decode_dataset(read_file(path), path); }

// ---- CSV export ---------------------------------------------------------------

// One row per sample: sample_id[,label],x0..x{k-1}; values in round-trip
// precision.
inline std::string dataset_csv(const Dataset& ds) {
  std::ostringstream os;
  os << "sample_id";
  if (ds.labels) os << ",label";
  const std::size_t cols = ds.x.rows() ? ds.x.cols() : numkit::shape_size(ds.x.tail_shape());
  for (std::size_t c = 0; c < cols; ++c) os << ",x" << c;
  os << '\n';
  for (std::size_t r = 0; r < ds.size(); ++r) {
    os << ds.sample_ids[r];
    if (ds.labels) os << ',' << (*ds.labels)[r];
    for (double v : ds.x.row(r)) os << ',' << trainers::format_double(v);
    os << '\n';
  }
  return os.str();
}

// Matrix with a leading id column, e.g. latents.csv.
inline std::string matrix_csv(const Tensor& m, const std::vector<std::uint64_t>& ids, const std::string& prefix) {
  std::ostringstream os;
  os << "sample_id";
  const std::size_t cols = m.rank() == 2 ? m.cols() : 0;
  for (std::size_t c = 0; c < cols; ++c) os << ',' << prefix << c;
  os << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    os << (r < ids.size() ? ids[r] : r);
    for (double v : m.row(r)) os << ',' << trainers::format_double(v);
    os << '\n';
  }
  return os.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path);
  f << text;
}

}  // namespace encfree::data
