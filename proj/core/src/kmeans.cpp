#include <algorithm>
#include <cmath>
#include <limits>

#include "fastlane/errors.hpp"
#include "fastlane/index.hpp"
#include "fastlane/rng.hpp"

namespace fastlane {

namespace {

double sq_dist(const float* x, const double* c, std::size_t dims) {
  double s = 0.0;
  for (std::size_t k = 0; k < dims; ++k) {
    const double d = static_cast<double>(x[k]) - c[k];
    s += d * d;
  }
  return s;
}

}  // namespace

KMeansResult kmeans(std::span<const float> data, std::size_t n, std::size_t dims, const KMeansOptions& opts) {
  if (opts.k == 0) throw ConfigError("kmeans: K must be >= 1");
  if (opts.k > n) {
    throw ConfigError("kmeans: K=" + std::to_string(opts.k) + " exceeds the " + std::to_string(n) + " vectors");
  }
  if (data.size() != n * dims) throw DimensionError("kmeans: data size does not match n x dims");
  const std::size_t k = opts.k;
  Rng rng(opts.seed);
  KMeansResult r;
  r.centroids.assign(k * dims, 0.0);
  r.assignment.assign(n, 0);

  // k-means++ seeding.
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t first = rng.index(n);
  for (std::size_t j = 0; j < dims; ++j) r.centroids[j] = data[first * dims + j];
  for (std::size_t c = 1; c < k; ++c) {
    const double* prev = &r.centroids[(c - 1) * dims];
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(&data[i * dims], prev, dims));
      total += d2[i];
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        target -= d2[i];
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.index(n);
    }
    for (std::size_t j = 0; j < dims; ++j) r.centroids[c * dims + j] = data[pick * dims + j];
  }

  std::vector<double> sums(k * dims);
  std::vector<std::size_t> counts(k);
  std::vector<double> dist(n);
  for (std::size_t it = 0; it < opts.max_iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t arg = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const double d = sq_dist(&data[i * dims], &r.centroids[c * dims], dims);
        if (d < best) {
          best = d;
          arg = static_cast<std::uint32_t>(c);
        }
      }
      r.assignment[i] = arg;
      dist[i] = best;
    }
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = r.assignment[i];
      ++counts[c];
      for (std::size_t j = 0; j < dims; ++j) sums[c * dims + j] += data[i * dims + j];
    }
    double movement = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<double> next(dims);
      if (counts[c] == 0) {
        // Empty cluster: restart it at the point farthest from its centroid.
        const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
        for (std::size_t j = 0; j < dims; ++j) next[j] = data[far * dims + j];
        dist[far] = 0.0;
      } else {
        for (std::size_t j = 0; j < dims; ++j) next[j] = sums[c * dims + j] / static_cast<double>(counts[c]);
      }
      double m = 0.0;
      for (std::size_t j = 0; j < dims; ++j) {
        const double d = next[j] - r.centroids[c * dims + j];
        m += d * d;
        r.centroids[c * dims + j] = next[j];
      }
      movement = std::max(movement, std::sqrt(m));
    }
    r.iterations = it + 1;
    if (movement < opts.tolerance) break;
  }
  return r;
}

}  // namespace fastlane
