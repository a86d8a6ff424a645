#pragma once

// k-d tree over feature vectors with exact k-nearest-neighbor queries under
// l_p distance, a brute-force oracle, and empirical-CDF prediction from
// neighbor labels.
//
// Construction cycles the split dimension by depth and splits at the lower
// median under the total order (coordinate, point index), so the tree shape
// is a pure function of the input. Queries compare candidates by
// (accumulated distance, index); the accumulated form (sum of |dx|^p, or
// max |dx| for p = infinity) avoids taking roots until the end, and both
// the tree search and the oracle share one accumulation routine so ties
// resolve identically down to the last bit.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "raincdf/common.hpp"
#include "raincdf/dataset.hpp"
#include "raincdf/scoring.hpp"

namespace raincdf {

struct Neighbors {
  std::vector<std::uint32_t> indices;
  std::vector<double> distances;  // non-decreasing; ties by ascending index
};

namespace detail {

struct L1Metric {
  static double accum(double acc, double diff) { return acc + std::abs(diff); }
  static double plane(double diff) { return std::abs(diff); }
  static double finalize(double acc) { return acc; }
};

struct L2Metric {
  static double accum(double acc, double diff) { return acc + diff * diff; }
  static double plane(double diff) { return diff * diff; }
  static double finalize(double acc) { return std::sqrt(acc); }
};

struct LInfMetric {
  static double accum(double acc, double diff) { return std::max(acc, std::abs(diff)); }
  static double plane(double diff) { return std::abs(diff); }
  static double finalize(double acc) { return acc; }
};

struct LpMetric {
  double p;
  double accum(double acc, double diff) const { return acc + std::pow(std::abs(diff), p); }
  double plane(double diff) const { return std::pow(std::abs(diff), p); }
  double finalize(double acc) const { return std::pow(acc, 1.0 / p); }
};

// Accumulated distance with early abandonment: once the partial sum
// strictly exceeds the threshold the point cannot enter the result, even on
// an index tie, so the scan stops. Completed sums are bit-identical to an
// unconditional scan because the accumulation order never changes.
template <typename M>
double accumulated_distance(const M& metric, const double* a, const double* b, std::size_t d,
                            double abandon_above) {
  double acc = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    acc = metric.accum(acc, a[i] - b[i]);
    if (acc > abandon_above) return acc;
  }
  return acc;
}

struct HeapEntry {
  double acc;
  std::uint32_t index;

  bool operator<(const HeapEntry& o) const {
    return acc < o.acc || (acc == o.acc && index < o.index);
  }
};

template <typename M>
Neighbors finalize_neighbors(const M& metric, std::vector<HeapEntry> entries) {
  std::sort(entries.begin(), entries.end());
  Neighbors out;
  out.indices.reserve(entries.size());
  out.distances.reserve(entries.size());
  for (const auto& e : entries) {
    out.indices.push_back(e.index);
    out.distances.push_back(metric.finalize(e.acc));
  }
  return out;
}

inline void check_query_args(std::size_t m, std::size_t d, std::span<const double> x,
                             std::size_t k, double p) {
  if (k == 0) throw ConfigError("knn: k must be >= 1");
  if (k > m) {
    throw ConfigError("knn: k = " + std::to_string(k) + " exceeds " + std::to_string(m) +
                      " training points");
  }
  if (!(p >= 1.0)) throw ConfigError("knn: p must be >= 1");
  if (x.size() != d) {
    throw DataError("knn: query has " + std::to_string(x.size()) + " coordinates, expected " +
                    std::to_string(d));
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw DataError("knn: non-finite query coordinate");
  }
}

template <typename M>
Neighbors brute_force_knn_impl(const M& metric, const Matrix& points,
                               std::span<const double> x, std::size_t k) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<HeapEntry> all(points.rows);
  for (std::size_t i = 0; i < points.rows; ++i) {
    all[i].acc = accumulated_distance(metric, x.data(), points.row(i).data(), points.cols, inf);
    all[i].index = static_cast<std::uint32_t>(i);
  }
  std::sort(all.begin(), all.end());
  all.resize(k);
  return finalize_neighbors(metric, std::move(all));
}

}  // namespace detail

// Full-scan oracle: sort every point by (accumulated distance, index) and
// take the first k.
inline Neighbors brute_force_knn(const Matrix& points, std::span<const double> x,
                                 std::size_t k, double p = 2.0) {
  detail::check_query_args(points.rows, points.cols, x, k, p);
  if (p == 1.0) return detail::brute_force_knn_impl(detail::L1Metric{}, points, x, k);
  if (p == 2.0) return detail::brute_force_knn_impl(detail::L2Metric{}, points, x, k);
  if (std::isinf(p)) return detail::brute_force_knn_impl(detail::LInfMetric{}, points, x, k);
  return detail::brute_force_knn_impl(detail::LpMetric{p}, points, x, k);
}

class KdTree {
 public:
  struct Node {
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::int32_t split_dim = -1;
    std::int32_t point_index = -1;  // the median point stored at an internal node
    double split_value = 0.0;
    std::int32_t bucket_begin = -1;
    std::int32_t bucket_count = 0;

    bool is_leaf() const { return split_dim < 0; }
  };

  static KdTree build(Matrix points, std::vector<double> labels,
                      std::uint32_t leaf_capacity = 16, bool standardize = false) {
    if (points.rows == 0 || points.cols == 0) {
      throw DataError("kdtree: empty point set");
    }
    if (labels.size() != points.rows) {
      throw DataError("kdtree: " + std::to_string(labels.size()) + " labels for " +
                      std::to_string(points.rows) + " points");
    }
    if (leaf_capacity == 0) throw ConfigError("kdtree: leaf capacity must be >= 1");
    for (std::size_t i = 0; i < points.rows; ++i) {
      for (double v : points.row(i)) {
        if (!std::isfinite(v)) {
          throw DataError("kdtree: non-finite coordinate in row " + std::to_string(i));
        }
      }
    }

    KdTree tree;
    tree.leaf_capacity_ = leaf_capacity;
    tree.labels_ = std::move(labels);
    if (standardize) {
      tree.standardized_ = true;
      tree.fit_scaler(points);
      for (std::size_t i = 0; i < points.rows; ++i) tree.apply_scaler(points.row(i));
    }
    tree.points_ = std::move(points);

    std::vector<std::uint32_t> idx(tree.points_.rows);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::uint32_t>(i);
    tree.nodes_.reserve(2 * tree.points_.rows / std::max<std::size_t>(leaf_capacity, 1) + 8);
    tree.root_ = tree.build_range(idx, 0, idx.size(), 0);
    return tree;
  }

  std::size_t size() const { return points_.rows; }
  std::size_t dim() const { return points_.cols; }
  std::uint32_t leaf_capacity() const { return leaf_capacity_; }
  bool standardized() const { return standardized_; }
  const Matrix& points() const { return points_; }
  std::span<const double> labels() const { return labels_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<std::uint32_t>& buckets() const { return buckets_; }
  std::int32_t root() const { return root_; }

  template <typename Fn>
  void for_each_point_index(Fn&& fn) const {
    for (const auto& node : nodes_) {
      if (node.is_leaf()) {
        for (std::int32_t i = 0; i < node.bucket_count; ++i) {
          fn(buckets_[static_cast<std::size_t>(node.bucket_begin) + i]);
        }
      } else {
        fn(static_cast<std::uint32_t>(node.point_index));
      }
    }
  }

  Neighbors query(std::span<const double> x, std::size_t k, double p = 2.0) const {
    detail::check_query_args(points_.rows, points_.cols, x, k, p);
    std::vector<double> scaled;
    if (standardized_) {
      scaled.assign(x.begin(), x.end());
      apply_scaler(scaled);
      x = scaled;
    }
    if (p == 1.0) return query_impl(detail::L1Metric{}, x, k);
    if (p == 2.0) return query_impl(detail::L2Metric{}, x, k);
    if (std::isinf(p)) return query_impl(detail::LInfMetric{}, x, k);
    return query_impl(detail::LpMetric{p}, x, k);
  }

  // Local histogram over the k nearest labels; shares the bin-counting
  // routine with train_histogram so k = m reproduces it exactly.
  CdfPrediction predict(std::span<const double> x, std::size_t k, double p = 2.0) const {
    const Neighbors nn = query(x, k, p);
    std::array<std::uint64_t, kNumBins> counts{};
    for (std::uint32_t idx : nn.indices) {
      double c = std::ceil(labels_[idx]);
      if (c < 0.0) c = 0.0;
      if (c < static_cast<double>(kNumBins)) counts[static_cast<std::size_t>(c)] += 1;
    }
    return detail::cdf_from_counts(counts, k);
  }

  void save(const std::filesystem::path& path) const;
  static KdTree load(const std::filesystem::path& path);

 private:
  friend struct KdTreeSerializer;

  std::int32_t build_range(std::vector<std::uint32_t>& idx, std::size_t lo, std::size_t hi,
                           std::size_t depth) {
    const std::size_t count = hi - lo;
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();
    if (count <= leaf_capacity_) {
      std::sort(idx.begin() + lo, idx.begin() + hi);
      nodes_[id].bucket_begin = static_cast<std::int32_t>(buckets_.size());
      nodes_[id].bucket_count = static_cast<std::int32_t>(count);
      buckets_.insert(buckets_.end(), idx.begin() + lo, idx.begin() + hi);
      return id;
    }
    const std::size_t dim = depth % points_.cols;
    const std::size_t mid = lo + (count - 1) / 2;  // lower median
    const auto& pts = points_;
    std::nth_element(idx.begin() + lo, idx.begin() + mid, idx.begin() + hi,
                     [&pts, dim](std::uint32_t a, std::uint32_t b) {
                       const double ca = pts(a, dim);
                       const double cb = pts(b, dim);
                       return ca < cb || (ca == cb && a < b);
                     });
    const std::uint32_t median = idx[mid];
    nodes_[id].split_dim = static_cast<std::int32_t>(dim);
    nodes_[id].split_value = points_(median, dim);
    nodes_[id].point_index = static_cast<std::int32_t>(median);
    const std::int32_t left = build_range(idx, lo, mid, depth + 1);
    const std::int32_t right = build_range(idx, mid + 1, hi, depth + 1);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  template <typename M>
  struct SearchState {
    const M& metric;
    std::span<const double> x;
    std::size_t k;
    std::vector<detail::HeapEntry> heap;

    bool full() const { return heap.size() == k; }
    double threshold() const {
      return full() ? heap.front().acc : std::numeric_limits<double>::infinity();
    }
  };

  template <typename M>
  void consider(SearchState<M>& s, std::uint32_t index) const {
    const double acc = detail::accumulated_distance(s.metric, s.x.data(),
                                                    points_.row(index).data(), points_.cols,
                                                    s.threshold());
    const detail::HeapEntry entry{acc, index};
    if (!s.full()) {
      s.heap.push_back(entry);
      std::push_heap(s.heap.begin(), s.heap.end());
      return;
    }
    if (entry < s.heap.front()) {
      std::pop_heap(s.heap.begin(), s.heap.end());
      s.heap.back() = entry;
      std::push_heap(s.heap.begin(), s.heap.end());
    }
  }

  template <typename M>
  void search(SearchState<M>& s, std::int32_t node_id) const {
    const Node& node = nodes_[node_id];
    if (node.is_leaf()) {
      for (std::int32_t i = 0; i < node.bucket_count; ++i) {
        consider(s, buckets_[static_cast<std::size_t>(node.bucket_begin) + i]);
      }
      return;
    }
    consider(s, static_cast<std::uint32_t>(node.point_index));
    const double diff = s.x[static_cast<std::size_t>(node.split_dim)] - node.split_value;
    const std::int32_t near = diff <= 0.0 ? node.left : node.right;
    const std::int32_t far = diff <= 0.0 ? node.right : node.left;
    search(s, near);
    // The splitting plane is the closest any far-side point can be; prune
    // only when even that is strictly worse than the current k-th best.
    if (!s.full() || s.metric.plane(diff) <= s.heap.front().acc) {
      search(s, far);
    }
  }

  template <typename M>
  Neighbors query_impl(const M& metric, std::span<const double> x, std::size_t k) const {
    SearchState<M> s{metric, x, k, {}};
    s.heap.reserve(k);
    search(s, root_);
    return detail::finalize_neighbors(metric, std::move(s.heap));
  }

  void fit_scaler(const Matrix& points) {
    const std::size_t d = points.cols;
    mean_.assign(d, 0.0);
    scale_.assign(d, 1.0);
    for (std::size_t i = 0; i < points.rows; ++i) {
      for (std::size_t j = 0; j < d; ++j) mean_[j] += points(i, j);
    }
    for (double& v : mean_) v /= static_cast<double>(points.rows);
    std::vector<double> var(d, 0.0);
    for (std::size_t i = 0; i < points.rows; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        const double c = points(i, j) - mean_[j];
        var[j] += c * c;
      }
    }
    for (std::size_t j = 0; j < d; ++j) {
      const double sd = std::sqrt(var[j] / static_cast<double>(points.rows));
      scale_[j] = sd > 0.0 ? sd : 1.0;
    }
  }

  void apply_scaler(std::span<double> x) const {
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = (x[j] - mean_[j]) / scale_[j];
  }

  Matrix points_;
  std::vector<double> labels_;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> buckets_;
  std::int32_t root_ = -1;
  std::uint32_t leaf_capacity_ = 16;
  bool standardized_ = false;
  std::vector<double> mean_;
  std::vector<double> scale_;
};

inline Neighbors query_knn(const KdTree& tree, std::span<const double> x, std::size_t k,
                           double p = 2.0) {
  return tree.query(x, k, p);
}

inline CdfPrediction knn_predict(const KdTree& tree, std::span<const double> x, std::size_t k,
                                 double p = 2.0) {
  return tree.predict(x, k, p);
}

inline KdTree build_kdtree(Matrix points, std::vector<double> labels,
                           std::uint32_t leaf_capacity = 16, bool standardize = false) {
  return KdTree::build(std::move(points), std::move(labels), leaf_capacity, standardize);
}

// Flattens a labeled derived dataset into the matrix + labels pair the tree
// consumes.
inline std::pair<Matrix, std::vector<double>> feature_matrix(const Dataset& data) {
  if (data.records.empty()) throw DataError("empty dataset");
  Matrix points(data.records.size(), data.schema.size());
  std::vector<double> labels(data.records.size());
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& rec = data.records[i];
    if (rec.values.size() != data.schema.size()) {
      throw DataError("record " + std::to_string(i) + " has " +
                      std::to_string(rec.values.size()) + " features, schema has " +
                      std::to_string(data.schema.size()));
    }
    if (!rec.label) throw DataError("record " + std::to_string(i) + " has no label");
    std::copy(rec.values.begin(), rec.values.end(), points.row(i).begin());
    labels[i] = *rec.label;
  }
  return {std::move(points), std::move(labels)};
}

// ---- serialization -------------------------------------------------------

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_i32(std::string& out, std::int32_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
}

inline void put_f64(std::string& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class ByteReader {
 public:
  ByteReader(const std::string& data, std::string path)
      : data_(data), path_(std::move(path)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return v;
  }

  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }

  void bytes(char* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }

  bool exhausted() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw DataError(path_ + ": truncated tree file");
  }

  const std::string& data_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline constexpr char kTreeMagic[8] = {'R', 'A', 'I', 'N', 'K', 'D', '0', '1'};

struct KdTreeSerializer {
  static void save(const KdTree& tree, const std::filesystem::path& path) {
    std::string buf;
    buf.reserve(64 + tree.points_.data.size() * 8 + tree.labels_.size() * 8 +
                tree.nodes_.size() * 36 + tree.buckets_.size() * 4);
    buf.append(kTreeMagic, sizeof(kTreeMagic));
    detail::put_u64(buf, tree.points_.rows);
    detail::put_u64(buf, tree.points_.cols);
    detail::put_u32(buf, tree.leaf_capacity_);
    buf.push_back(tree.standardized_ ? 1 : 0);
    if (tree.standardized_) {
      for (double v : tree.mean_) detail::put_f64(buf, v);
      for (double v : tree.scale_) detail::put_f64(buf, v);
    }
    detail::put_i32(buf, tree.root_);
    detail::put_u64(buf, tree.nodes_.size());
    for (const auto& n : tree.nodes_) {
      detail::put_i32(buf, n.left);
      detail::put_i32(buf, n.right);
      detail::put_i32(buf, n.split_dim);
      detail::put_i32(buf, n.point_index);
      detail::put_f64(buf, n.split_value);
      detail::put_i32(buf, n.bucket_begin);
      detail::put_i32(buf, n.bucket_count);
    }
    detail::put_u64(buf, tree.buckets_.size());
    for (std::uint32_t b : tree.buckets_) detail::put_u32(buf, b);
    for (double v : tree.points_.data) detail::put_f64(buf, v);
    for (double v : tree.labels_) detail::put_f64(buf, v);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError("write failed: " + path.string());
  }

  static KdTree load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    detail::ByteReader r(data, path.string());

    char magic[8];
    r.bytes(magic, 8);
    if (std::memcmp(magic, kTreeMagic, 6) != 0) {
      throw DataError(path.string() + ": not a tree file");
    }
    if (std::memcmp(magic, kTreeMagic, 8) != 0) {
      throw DataError(path.string() + ": unsupported tree file version " +
                      std::string(magic + 6, 2));
    }

    KdTree tree;
    const std::uint64_t m = r.u64();
    const std::uint64_t d = r.u64();
    tree.leaf_capacity_ = r.u32();
    if (m == 0 || d == 0 || tree.leaf_capacity_ == 0) {
      throw DataError(path.string() + ": invalid tree dimensions");
    }
    tree.standardized_ = r.u8() != 0;
    if (tree.standardized_) {
      tree.mean_.resize(d);
      tree.scale_.resize(d);
      for (auto& v : tree.mean_) v = r.f64();
      for (auto& v : tree.scale_) v = r.f64();
    }
    tree.root_ = r.i32();
    const std::uint64_t n_nodes = r.u64();
    if (tree.root_ < 0 || static_cast<std::uint64_t>(tree.root_) >= n_nodes) {
      throw DataError(path.string() + ": invalid root node");
    }
    tree.nodes_.resize(n_nodes);
    for (auto& n : tree.nodes_) {
      n.left = r.i32();
      n.right = r.i32();
      n.split_dim = r.i32();
      n.point_index = r.i32();
      n.split_value = r.f64();
      n.bucket_begin = r.i32();
      n.bucket_count = r.i32();
    }
    const std::uint64_t n_buckets = r.u64();
    tree.buckets_.resize(n_buckets);
    for (auto& b : tree.buckets_) b = r.u32();
    tree.points_ = Matrix(m, d);
    for (auto& v : tree.points_.data) v = r.f64();
    tree.labels_.resize(m);
    for (auto& v : tree.labels_) v = r.f64();
    if (!r.exhausted()) throw DataError(path.string() + ": trailing bytes in tree file");

    // Walk the tree from the root so a corrupt file (bad indices, cycles,
    // orphaned points) is rejected before any query dereferences it.
    std::vector<char> visited(n_nodes, 0);
    std::vector<std::int32_t> stack{tree.root_};
    std::size_t reachable = 0;
    while (!stack.empty()) {
      const std::int32_t id = stack.back();
      stack.pop_back();
      if (id < 0 || static_cast<std::uint64_t>(id) >= n_nodes || visited[id]) {
        throw DataError(path.string() + ": malformed tree structure");
      }
      visited[id] = 1;
      const auto& n = tree.nodes_[id];
      if (n.is_leaf()) {
        if (n.bucket_begin < 0 || n.bucket_count < 0 ||
            static_cast<std::uint64_t>(n.bucket_begin) +
                    static_cast<std::uint64_t>(n.bucket_count) >
                n_buckets) {
          throw DataError(path.string() + ": leaf bucket out of range");
        }
        reachable += static_cast<std::size_t>(n.bucket_count);
      } else {
        if (n.split_dim >= static_cast<std::int32_t>(d) || n.point_index < 0 ||
            static_cast<std::uint64_t>(n.point_index) >= m || !std::isfinite(n.split_value)) {
          throw DataError(path.string() + ": invalid internal node");
        }
        reachable += 1;
        stack.push_back(n.left);
        stack.push_back(n.right);
      }
    }
    for (std::uint32_t b : tree.buckets_) {
      if (b >= m) throw DataError(path.string() + ": bucket entry out of range");
    }
    if (reachable != m) {
      throw DataError(path.string() + ": tree stores " + std::to_string(reachable) +
                      " points, header says " + std::to_string(m));
    }
    return tree;
  }
};

inline void KdTree::save(const std::filesystem::path& path) const {
  KdTreeSerializer::save(*this, path);
}

inline KdTree KdTree::load(const std::filesystem::path& path) {
  return KdTreeSerializer::load(path);
}

}  // namespace raincdf
