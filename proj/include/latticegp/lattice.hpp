/*
 * Copyright 2026 The latticegp Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "latticegp/common.hpp"
#include "latticegp/stencil.hpp"

namespace latticegp {

/// A vertex of the permutohedral lattice: d+1 integers summing to zero, all
/// congruent modulo d+1.
using LatticeKey = std::vector<int>;

// ---------------------------------------------------------------------------
// Embedding into H_d
// ---------------------------------------------------------------------------

/// Scaled isometry R^d -> H_d = {p in R^{d+1} : sum(p) = 0}. Column i of the
/// unscaled map is (1, ..., 1, -i, 0, ..., 0) / sqrt(i(i+1)) with i ones, so
/// the embedding runs in O(d) with a running suffix sum.
class EmbeddingBasis {
 public:
  EmbeddingBasis(Index d, double scale) : d_(d), scale_(scale), factors_(static_cast<std::size_t>(d)) {
    if (d < 1) throw std::invalid_argument("EmbeddingBasis: dimension must be >= 1");
    if (!(scale > 0.0)) throw std::invalid_argument("EmbeddingBasis: scale must be positive");
    for (Index i = 1; i <= d; ++i)
      factors_[static_cast<std::size_t>(i - 1)] = scale / std::sqrt(static_cast<double>(i * (i + 1)));
  }

  /// Scale chosen so that one lattice direction step, whose length in H_d is
  /// sqrt(d(d+1)), corresponds to `spacing` in normalized input units.
  static EmbeddingBasis for_spacing(Index d, double spacing) {
    if (!(spacing > 0.0)) throw std::invalid_argument("EmbeddingBasis: spacing must be positive");
    return EmbeddingBasis(d, std::sqrt(static_cast<double>(d * (d + 1))) / spacing);
  }

  Index dim() const { return d_; }
  double scale() const { return scale_; }

  void embed(std::span<const double> x, std::span<double> out) const {
    require_shape(static_cast<Index>(x.size()) == d_ && static_cast<Index>(out.size()) == d_ + 1,
                  "embed: dimension mismatch");
    double suffix = 0.0;
    for (Index i = d_; i >= 1; --i) {
      const double v = x[static_cast<std::size_t>(i - 1)];
      if (!std::isfinite(v)) throw std::domain_error("embed: non-finite input coordinate");
      const double cf = v * factors_[static_cast<std::size_t>(i - 1)];
      out[static_cast<std::size_t>(i)] = suffix - static_cast<double>(i) * cf;
      suffix += cf;
    }
    out[0] = suffix;
  }

  Vector embed(const Vector& x) const {
    Vector out(d_ + 1);
    embed(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
          std::span<double>(out.data(), static_cast<std::size_t>(out.size())));
    return out;
  }

  /// The (d+1) x d matrix of the map.
  Eigen::MatrixXd dense() const {
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(d_ + 1, d_);
    for (Index i = 1; i <= d_; ++i) {
      const double f = factors_[static_cast<std::size_t>(i - 1)];
      for (Index p = 0; p < i; ++p) e(p, i - 1) = f;
      e(i, i - 1) = -static_cast<double>(i) * f;
    }
    return e;
  }

 private:
  Index d_;
  double scale_;
  std::vector<double> factors_;
};

// ---------------------------------------------------------------------------
// Simplex location (remainder-0 rounding with rank sorting)
// ---------------------------------------------------------------------------

namespace detail {

// Rounds `p` to the nearest remainder-0 point, ranks the residuals and
// computes barycentric weights indexed by vertex remainder. rem0 and rank
// have d+1 entries, bary has d+2 (the last is scratch).
inline void locate_simplex(const double* p, int d, int* rem0, int* rank, double* bary) {
  const int dp1 = d + 1;
  const double inv = 1.0 / dp1;
  int sum = 0;
  for (int i = 0; i <= d; ++i) {
    const double v = p[i] * inv;
    const int up = static_cast<int>(std::ceil(v)) * dp1;
    const int down = static_cast<int>(std::floor(v)) * dp1;
    rem0[i] = (up - p[i] < p[i] - down) ? up : down;
    sum += rem0[i];
  }
  sum /= dp1;

  // Larger residual => lower rank; ties go to the lower coordinate index.
  for (int i = 0; i <= d; ++i) rank[i] = 0;
  for (int i = 0; i < d; ++i) {
    const double di = p[i] - rem0[i];
    for (int j = i + 1; j <= d; ++j) {
      if (di < p[j] - rem0[j])
        ++rank[i];
      else
        ++rank[j];
    }
  }

  if (sum > 0) {
    for (int i = 0; i <= d; ++i) {
      if (rank[i] >= dp1 - sum) {
        rem0[i] -= dp1;
        rank[i] += sum - dp1;
      } else {
        rank[i] += sum;
      }
    }
  } else if (sum < 0) {
    for (int i = 0; i <= d; ++i) {
      if (rank[i] < -sum) {
        rem0[i] += dp1;
        rank[i] += dp1 + sum;
      } else {
        rank[i] += sum;
      }
    }
  }

  for (int k = 0; k <= d + 1; ++k) bary[k] = 0.0;
  for (int i = 0; i <= d; ++i) {
    const double delta = (p[i] - rem0[i]) * inv;
    bary[d - rank[i]] += delta;
    bary[d + 1 - rank[i]] -= delta;
  }
  bary[0] += 1.0 + bary[d + 1];
}

// Coordinates of the remainder-k vertex of the located simplex.
inline void simplex_vertex(const int* rem0, const int* rank, int d, int k, int* key) {
  for (int i = 0; i <= d; ++i) key[i] = rem0[i] + (rank[i] <= d - k ? k : k - (d + 1));
}

}  // namespace detail

/// The d+1 vertices of one lattice simplex; vertex k has remainder k.
struct Simplex {
  std::vector<LatticeKey> vertices;
  std::vector<int> rank;
};

inline Simplex enclosing_simplex(std::span<const double> p) {
  if (p.size() < 2) throw std::invalid_argument("enclosing_simplex: need at least 2 coordinates");
  const int d = static_cast<int>(p.size()) - 1;
  double total = 0.0, magnitude = 1.0;
  for (double v : p) {
    if (!std::isfinite(v)) throw std::domain_error("enclosing_simplex: non-finite coordinate");
    total += v;
    magnitude += std::abs(v);
  }
  if (std::abs(total) > 1e-9 * magnitude) throw std::domain_error("enclosing_simplex: point is not in H_d");
  std::vector<int> rem0(static_cast<std::size_t>(d + 1));
  std::vector<double> bary(static_cast<std::size_t>(d + 2));
  Simplex simplex;
  simplex.rank.resize(static_cast<std::size_t>(d + 1));
  detail::locate_simplex(p.data(), d, rem0.data(), simplex.rank.data(), bary.data());
  simplex.vertices.assign(static_cast<std::size_t>(d + 1), LatticeKey(static_cast<std::size_t>(d + 1)));
  for (int k = 0; k <= d; ++k)
    detail::simplex_vertex(rem0.data(), simplex.rank.data(), d, k, simplex.vertices[static_cast<std::size_t>(k)].data());
  return simplex;
}

/// Barycentric coordinates of `p` in `simplex`, ordered like its vertices.
inline std::vector<double> barycentric_weights(std::span<const double> p, const Simplex& simplex) {
  const int d = static_cast<int>(p.size()) - 1;
  if (d < 1 || simplex.vertices.size() != p.size() || simplex.rank.size() != p.size())
    throw std::invalid_argument("barycentric_weights: simplex does not match point dimension");
  const int dp1 = d + 1;
  // Consecutive vertices must differ by 1 - (d+1) e_i where rank[i] = d+1-k.
  for (int k = 1; k <= d; ++k) {
    const auto& a = simplex.vertices[static_cast<std::size_t>(k - 1)];
    const auto& b = simplex.vertices[static_cast<std::size_t>(k)];
    if (a.size() != p.size() || b.size() != p.size()) throw std::invalid_argument("barycentric_weights: degenerate vertex set");
    for (int i = 0; i <= d; ++i) {
      const int expected = simplex.rank[static_cast<std::size_t>(i)] == dp1 - k ? 1 - dp1 : 1;
      if (b[static_cast<std::size_t>(i)] - a[static_cast<std::size_t>(i)] != expected)
        throw std::invalid_argument("barycentric_weights: degenerate vertex set");
    }
  }
  const auto& rem0 = simplex.vertices.front();
  std::vector<double> bary(static_cast<std::size_t>(d + 2), 0.0);
  for (int i = 0; i <= d; ++i) {
    const int rk = simplex.rank[static_cast<std::size_t>(i)];
    const double delta = (p[static_cast<std::size_t>(i)] - rem0[static_cast<std::size_t>(i)]) / dp1;
    bary[static_cast<std::size_t>(d - rk)] += delta;
    bary[static_cast<std::size_t>(d + 1 - rk)] -= delta;
  }
  bary[0] += 1.0 + bary[static_cast<std::size_t>(d + 1)];
  bary.pop_back();
  return bary;
}

/// `key` displaced by `offset` steps along lattice direction `direction`;
/// one step adds (d+1) e_direction - (1, ..., 1).
inline LatticeKey neighbor(const LatticeKey& key, int direction, int offset) {
  const int dp1 = static_cast<int>(key.size());
  if (direction < 0 || direction >= dp1) throw std::out_of_range("neighbor: direction out of range");
  LatticeKey out(key);
  for (int i = 0; i < dp1; ++i) out[static_cast<std::size_t>(i)] -= offset;
  out[static_cast<std::size_t>(direction)] += offset * dp1;
  return out;
}

/// True when `key` sums to zero and all coordinates share a residue mod d+1.
inline bool is_lattice_key(const LatticeKey& key) {
  if (key.size() < 2) return false;
  const int dp1 = static_cast<int>(key.size());
  long total = 0;
  const int residue = ((key[0] % dp1) + dp1) % dp1;
  for (int v : key) {
    total += v;
    if (((v % dp1) + dp1) % dp1 != residue) return false;
  }
  return total == 0;
}

// ---------------------------------------------------------------------------
// Hashed vertex storage
// ---------------------------------------------------------------------------

/// Open-addressing hash table from lattice keys to dense vertex indices.
/// Collisions are resolved by full key comparison; load factor stays <= 0.5.
class Lattice {
 public:
  explicit Lattice(Index d, std::size_t expected = 64) : d_(d), key_size_(static_cast<std::size_t>(d + 1)) {
    if (d < 1) throw std::invalid_argument("Lattice: dimension must be >= 1");
    std::size_t cap = 16;
    while (cap < 2 * expected) cap <<= 1;
    slots_.assign(cap, -1);
  }

  Index dim() const { return d_; }
  Index size() const { return static_cast<Index>(keys_.size() / key_size_); }
  std::size_t capacity() const { return slots_.size(); }

  int find(const int* key) const {
    std::size_t h = hash(key) & (slots_.size() - 1);
    while (true) {
      const int e = slots_[h];
      if (e < 0) return -1;
      if (equal(e, key)) return e;
      h = (h + 1) & (slots_.size() - 1);
    }
  }

  int find(const LatticeKey& key) const {
    require_shape(key.size() == key_size_, "Lattice::find: key length mismatch");
    return find(key.data());
  }

  /// Index of `key`, inserting it if absent.
  int insert(const int* key) {
    if (2 * (size() + 1) > static_cast<Index>(slots_.size())) grow();
    std::size_t h = hash(key) & (slots_.size() - 1);
    while (true) {
      const int e = slots_[h];
      if (e < 0) {
        const int idx = static_cast<int>(size());
        keys_.insert(keys_.end(), key, key + key_size_);
        slots_[h] = idx;
        return idx;
      }
      if (equal(e, key)) return e;
      h = (h + 1) & (slots_.size() - 1);
    }
  }

  int insert(const LatticeKey& key) {
    require_shape(key.size() == key_size_, "Lattice::insert: key length mismatch");
    return insert(key.data());
  }

  std::span<const int> key(int index) const {
    return {keys_.data() + static_cast<std::size_t>(index) * key_size_, key_size_};
  }

  LatticeKey key_vector(int index) const {
    auto k = key(index);
    return LatticeKey(k.begin(), k.end());
  }

  std::size_t memory_bytes() const { return keys_.capacity() * sizeof(int) + slots_.capacity() * sizeof(int); }

 private:
  std::size_t hash(const int* key) const {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL;
    for (std::size_t i = 0; i < key_size_; ++i) {
      h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(key[i])) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    return static_cast<std::size_t>(h);
  }

  bool equal(int index, const int* key) const {
    const int* stored = keys_.data() + static_cast<std::size_t>(index) * key_size_;
    return std::equal(stored, stored + key_size_, key);
  }

  void grow() {
    std::vector<int> fresh(slots_.size() * 2, -1);
    const std::size_t mask = fresh.size() - 1;
    for (int e : slots_) {
      if (e < 0) continue;
      std::size_t h = hash(keys_.data() + static_cast<std::size_t>(e) * key_size_) & mask;
      while (fresh[h] >= 0) h = (h + 1) & mask;
      fresh[h] = e;
    }
    slots_.swap(fresh);
  }

  Index d_;
  std::size_t key_size_;
  std::vector<int> keys_;
  std::vector<int> slots_;
};

// ---------------------------------------------------------------------------
// Splat plan: the sparse rows of W
// ---------------------------------------------------------------------------

/// For each input, d+1 (vertex index, barycentric weight) pairs. Entry k of
/// input i is the remainder-k vertex of its enclosing simplex.
struct SplatPlan {
  Index n = 0;
  Index d = 0;
  std::vector<int> vertex;
  std::vector<double> weight;

  Index entries_per_input() const { return d + 1; }
  int vertex_at(Index i, Index k) const { return vertex[static_cast<std::size_t>(i * (d + 1) + k)]; }
  double weight_at(Index i, Index k) const { return weight[static_cast<std::size_t>(i * (d + 1) + k)]; }
  std::size_t memory_bytes() const { return vertex.capacity() * sizeof(int) + weight.capacity() * sizeof(double); }
};

/// Embeds each row of `x_normalized` (already divided by the lengthscales),
/// locates its simplex and registers the vertices in `lattice`.
inline SplatPlan build_plan(Lattice& lattice, const EmbeddingBasis& basis, const Matrix& x_normalized) {
  const Index n = x_normalized.rows();
  const Index d = basis.dim();
  require_shape(x_normalized.cols() == d && lattice.dim() == d, "build_plan: dimension mismatch");
  const auto dp1 = static_cast<std::size_t>(d + 1);
  const int di = static_cast<int>(d);

  SplatPlan plan;
  plan.n = n;
  plan.d = d;
  plan.vertex.resize(static_cast<std::size_t>(n) * dp1);
  plan.weight.resize(static_cast<std::size_t>(n) * dp1);
  std::vector<int> rem0(static_cast<std::size_t>(n) * dp1);
  std::vector<int> rank(static_cast<std::size_t>(n) * dp1);

  bool bad_input = false;
#pragma omp parallel
  {
    std::vector<double> elevated(dp1);
    std::vector<double> bary(dp1 + 1);
#pragma omp for schedule(static)
    for (Index i = 0; i < n; ++i) {
      const auto row = static_cast<std::size_t>(i) * dp1;
      bool finite = true;
      for (Index j = 0; j < d; ++j) finite = finite && std::isfinite(x_normalized(i, j));
      if (!finite) {
#pragma omp atomic write
        bad_input = true;
        continue;
      }
      basis.embed(std::span<const double>(x_normalized.row(i).data(), static_cast<std::size_t>(d)), elevated);
      detail::locate_simplex(elevated.data(), di, rem0.data() + row, rank.data() + row, bary.data());
      for (std::size_t k = 0; k < dp1; ++k) plan.weight[row + k] = bary[k];
    }
  }
  if (bad_input) throw std::domain_error("build_plan: non-finite input");

  // Serial insertion keeps vertex numbering deterministic.
  std::vector<int> key(dp1);
  for (Index i = 0; i < n; ++i) {
    const auto row = static_cast<std::size_t>(i) * dp1;
    for (int k = 0; k <= di; ++k) {
      detail::simplex_vertex(rem0.data() + row, rank.data() + row, di, k, key.data());
      plan.vertex[row + static_cast<std::size_t>(k)] = lattice.insert(key.data());
    }
  }
  return plan;
}

/// Lattice values = W^T V. Rows are indexed by lattice vertex; the row count
/// is the lattice size `m`, which may exceed the vertices this plan touches.
inline Matrix splat(const SplatPlan& plan, const Matrix& values, Index m) {
  require_shape(values.rows() == plan.n, "splat: value rows do not match plan inputs");
  Matrix out = Matrix::Zero(m, values.cols());
  const Index dp1 = plan.d + 1;
  for (Index i = 0; i < plan.n; ++i) {
    for (Index k = 0; k < dp1; ++k) {
      const int v = plan.vertex_at(i, k);
      if (v < 0 || v >= m) throw std::out_of_range("splat: plan vertex outside lattice");
      out.row(v).noalias() += plan.weight_at(i, k) * values.row(i);
    }
  }
  return out;
}

/// Input values = W * lattice values.
inline Matrix slice(const SplatPlan& plan, const Matrix& lattice_values) {
  const Index m = lattice_values.rows();
  Matrix out = Matrix::Zero(plan.n, lattice_values.cols());
  const Index dp1 = plan.d + 1;
  bool missing = false;
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < plan.n; ++i) {
    for (Index k = 0; k < dp1; ++k) {
      const int v = plan.vertex_at(i, k);
      if (v < 0 || v >= m) {
#pragma omp atomic write
        missing = true;
        continue;
      }
      out.row(i).noalias() += plan.weight_at(i, k) * lattice_values.row(v);
    }
  }
  if (missing) throw std::out_of_range("slice: plan references a vertex missing from the lattice store");
  return out;
}

// ---------------------------------------------------------------------------
// Blur
// ---------------------------------------------------------------------------

/// Precomputed neighbor indices: entry (u, direction, offset) for offsets
/// +-1..+-order; -1 marks a neighbor that is not in the lattice.
struct NeighborTable {
  Index m = 0;
  Index d = 0;
  int order = 0;
  std::vector<int> index;

  int at(Index u, Index direction, int offset) const {
    const int slot = offset > 0 ? offset - 1 : order - offset - 1;
    return index[static_cast<std::size_t>((u * (d + 1) + direction) * 2 * order + slot)];
  }
  std::size_t memory_bytes() const { return index.capacity() * sizeof(int); }
};

inline NeighborTable build_neighbors(const Lattice& lattice, int order) {
  NeighborTable table;
  table.m = lattice.size();
  table.d = lattice.dim();
  table.order = order;
  if (order <= 0) return table;
  const Index dp1 = table.d + 1;
  const auto m = table.m;
  table.index.resize(static_cast<std::size_t>(m * dp1 * 2 * order));
#pragma omp parallel
  {
    std::vector<int> probe(static_cast<std::size_t>(dp1));
#pragma omp for schedule(static)
    for (Index u = 0; u < m; ++u) {
      const auto key = lattice.key(static_cast<int>(u));
      for (Index j = 0; j < dp1; ++j) {
        for (int sign : {+1, -1}) {
          for (int step = 1; step <= order; ++step) {
            const int offset = sign * step;
            for (Index i = 0; i < dp1; ++i) probe[static_cast<std::size_t>(i)] = key[static_cast<std::size_t>(i)] - offset;
            probe[static_cast<std::size_t>(j)] += offset * static_cast<int>(dp1);
            const int slot = offset > 0 ? offset - 1 : order - offset - 1;
            table.index[static_cast<std::size_t>((u * dp1 + j) * 2 * order + slot)] = lattice.find(probe.data());
          }
        }
      }
    }
  }
  return table;
}

enum class BlurOrder { kAscending, kDescending };

/// One convolution pass along `direction`: v_u <- sum_i c_i v_{u + i e_dir}.
/// Missing neighbors read as zero.
inline Matrix blur_direction(const NeighborTable& table, const Matrix& values, const Stencil& stencil, Index direction) {
  Matrix out(values.rows(), values.cols());
  const double c0 = stencil.coefficient(0);
  const int r = stencil.order;
#pragma omp parallel for schedule(static)
  for (Index u = 0; u < values.rows(); ++u) {
    out.row(u) = c0 * values.row(u);
    for (int step = 1; step <= r; ++step) {
      const double c = stencil.coefficient(step);
      const int up = table.at(u, direction, step);
      const int down = table.at(u, direction, -step);
      if (up >= 0) out.row(u).noalias() += c * values.row(up);
      if (down >= 0) out.row(u).noalias() += c * values.row(down);
    }
  }
  return out;
}

/// Sequential convolution along all d+1 lattice directions.
inline Matrix blur(const NeighborTable& table, const Matrix& values, const Stencil& stencil,
                   BlurOrder order = BlurOrder::kAscending) {
  require_shape(values.rows() == table.m, "blur: value rows do not match lattice size");
  if (stencil.order > table.order) throw std::invalid_argument("blur: neighbor table built for a smaller stencil");
  if (stencil.order == 0 && stencil.coefficient(0) == 1.0) return values;
  const Index dp1 = table.d + 1;
  Matrix current = values;
  for (Index s = 0; s < dp1; ++s) {
    const Index direction = order == BlurOrder::kAscending ? s : dp1 - 1 - s;
    current = blur_direction(table, current, stencil, direction);
  }
  return current;
}

/// Writes one line per plan entry: the vertex coordinates then the weight,
/// tab separated.
inline void dump_plan(std::ostream& os, const Lattice& lattice, const SplatPlan& plan) {
  const auto old_precision = os.precision(17);
  for (Index i = 0; i < plan.n; ++i) {
    for (Index k = 0; k <= plan.d; ++k) {
      for (int c : lattice.key(plan.vertex_at(i, k))) os << c << '\t';
      os << plan.weight_at(i, k) << '\n';
    }
  }
  os.precision(old_precision);
}

}  // namespace latticegp
