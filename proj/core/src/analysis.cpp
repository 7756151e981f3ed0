#include "fastlane/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "fastlane/errors.hpp"

namespace fastlane {

SimilarityMatrix similarity_matrix(const ViewMatrix& v) {
  v.validate();
  SimilarityMatrix s;
  s.owner_id = v.owner_id;
  std::vector<double> norms;
  for (auto r : v.valid_indices()) {
    double n = 0.0;
    for (double x : v.view(r)) n += x * x;
    if (n > 0.0) {
      s.views.push_back(r);
      norms.push_back(std::sqrt(n));
    } else {
      s.excluded.push_back(r);
    }
  }
  if (s.views.empty()) throw DimensionError("similarity_matrix: '" + v.owner_id + "' has no non-zero valid view");
  const std::size_t n = s.views.size();
  s.values = Tensor({n, n}, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    s.values.at(a, a) = 1.0;
    const auto va = v.view(s.views[a]);
    for (std::size_t b = a + 1; b < n; ++b) {
      const auto vb = v.view(s.views[b]);
      double d = std::inner_product(va.begin(), va.end(), vb.begin(), 0.0) / (norms[a] * norms[b]);
      d = std::clamp(d, -1.0, 1.0);
      s.values.at(a, b) = s.values.at(b, a) = d;
    }
  }
  return s;
}

std::string to_string(Linkage l) { return l == Linkage::average ? "average" : "complete"; }

Linkage linkage_from_string(const std::string& s) {
  if (s == "average") return Linkage::average;
  if (s == "complete") return Linkage::complete;
  throw ConfigError("unknown linkage '" + s + "' (expected average or complete)");
}

ClusterReport agglomerative_cluster(const SimilarityMatrix& sim, double threshold, Linkage linkage) {
  if (!(threshold > -1.0 && threshold <= 1.0)) throw ConfigError("cluster threshold must lie in (-1, 1]");
  const std::size_t n = sim.views.size();
  std::vector<std::vector<std::size_t>> clusters(n);
  for (std::size_t i = 0; i < n; ++i) clusters[i] = {i};

  auto link = [&](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    double acc = linkage == Linkage::average ? 0.0 : std::numeric_limits<double>::infinity();
    for (auto i : a)
      for (auto j : b) acc = linkage == Linkage::average ? acc + sim.values.at(i, j) : std::min(acc, sim.values.at(i, j));
    return linkage == Linkage::average ? acc / static_cast<double>(a.size() * b.size()) : acc;
  };

  for (;;) {
    double best = -std::numeric_limits<double>::infinity();
    std::size_t ba = 0, bb = 0;
    for (std::size_t a = 0; a < clusters.size(); ++a)
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        const double l = link(clusters[a], clusters[b]);
        if (l > best) best = l, ba = a, bb = b;
      }
    if (clusters.size() < 2 || best < threshold) break;
    clusters[ba].insert(clusters[ba].end(), clusters[bb].begin(), clusters[bb].end());
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bb));
  }

  ClusterReport r;
  r.threshold = threshold;
  r.linkage = linkage;
  r.n_clusters = clusters.size();
  std::vector<std::size_t> owner(n);
  for (std::size_t c = 0; c < clusters.size(); ++c)
    for (auto i : clusters[c]) owner[i] = c;
  std::vector<std::size_t> relabel(clusters.size(), std::numeric_limits<std::size_t>::max());
  std::size_t next = 0;
  r.assignment.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& l = relabel[owner[i]];
    if (l == std::numeric_limits<std::size_t>::max()) l = next++;
    r.assignment[i] = l;
  }
  return r;
}

RedundancyStats summarize(std::vector<RedundancyRow> rows) {
  RedundancyStats s;
  s.rows = std::move(rows);
  if (s.rows.empty()) return s;
  std::vector<double> counts;
  for (const auto& r : s.rows) {
    counts.push_back(static_cast<double>(r.n_clusters));
    ++s.histogram[r.n_clusters];
  }
  s.mean = std::accumulate(counts.begin(), counts.end(), 0.0) / static_cast<double>(counts.size());
  std::sort(counts.begin(), counts.end());
  const std::size_t n = counts.size();
  s.median = n % 2 ? counts[n / 2] : 0.5 * (counts[n / 2 - 1] + counts[n / 2]);
  return s;
}

RedundancyStats redundancy_report(std::span<const ViewMatrix> matrices, double threshold, Linkage linkage) {
  std::vector<RedundancyRow> rows;
  for (const auto& m : matrices) {
    const auto sim = similarity_matrix(m);
    rows.push_back({m.owner_id, agglomerative_cluster(sim, threshold, linkage).n_clusters, sim.views.size()});
  }
  return summarize(std::move(rows));
}

void write_redundancy_csv(const std::string& path, const RedundancyStats& stats) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out << "owner_id,n_clusters,views\n";
  for (const auto& r : stats.rows) {
    if (r.owner_id.find_first_of(",\n\"") != std::string::npos) {
      throw FormatError("owner id '" + r.owner_id + "' cannot be written to CSV");
    }
    out << r.owner_id << ',' << r.n_clusters << ',' << r.views << '\n';
  }
}

RedundancyStats read_redundancy_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("owner_id,n_clusters,views", 0) != 0) {
    throw FormatError(path + ": missing CSV header");
  }
  std::vector<RedundancyRow> rows;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    RedundancyRow r;
    std::string a, b, c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c)) {
      throw FormatError(path + ": line " + std::to_string(n) + ": expected 3 fields");
    }
    try {
      r = {a, std::stoul(b), std::stoul(c)};
    } catch (const std::exception&) {
      throw FormatError(path + ": line " + std::to_string(n) + ": bad number");
    }
    rows.push_back(std::move(r));
  }
  return summarize(std::move(rows));
}

}  // namespace fastlane
