#include "fastlane/index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "fastlane/errors.hpp"

namespace fastlane {

namespace {

constexpr std::uint32_t kIndexVersion = 1;

double dot_f(std::span<const double> q, const float* v, std::size_t dims) {
  double s = 0.0;
  for (std::size_t k = 0; k < dims; ++k) s += q[k] * static_cast<double>(v[k]);
  return s;
}

struct Candidate {
  std::uint32_t doc;
  double score;
  std::uint32_t view;
};

}  // namespace

std::string to_string(IndexKind k) { return k == IndexKind::flat ? "flat" : "ivf"; }

IndexKind index_kind_from_string(const std::string& s) {
  if (s == "flat") return IndexKind::flat;
  if (s == "ivf") return IndexKind::ivf;
  throw ConfigError("unknown index kind '" + s + "' (expected flat or ivf)");
}

std::vector<IndexedView> views_from_matrices(std::span<const ViewMatrix> docs) {
  std::vector<IndexedView> out;
  for (const auto& d : docs) {
    for (std::size_t r = 0; r < d.views(); ++r) {
      if (!d.is_valid(r)) continue;
      IndexedView v{d.owner_id, static_cast<std::uint32_t>(r), {}};
      v.vector.assign(d.view(r).begin(), d.view(r).end());
      out.push_back(std::move(v));
    }
  }
  return out;
}

struct MultiViewIndex::Scratch {
  explicit Scratch(std::size_t n) : best(n), view(n), stamp(n, 0) {}

  void next() {
    ++epoch;
    touched.clear();
  }
  void offer(std::uint32_t doc, double score, std::uint32_t v) {
    if (stamp[doc] != epoch) {
      stamp[doc] = epoch;
      best[doc] = score;
      view[doc] = v;
      touched.push_back(doc);
    } else if (score > best[doc]) {
      best[doc] = score;
      view[doc] = v;
    }
  }

  std::vector<double> best;
  std::vector<std::uint32_t> view;
  std::vector<std::uint32_t> stamp;
  std::uint32_t epoch = 0;
  std::vector<std::uint32_t> touched;
};

void MultiViewIndex::init_docs(const std::vector<IndexedView>& views) {
  if (views.empty()) throw IndexError("cannot build an index from an empty collection");
  dims_ = views.front().vector.size();
  if (dims_ == 0) throw DimensionError("indexed vectors must have at least one dimension");
  std::set<std::pair<std::string, std::uint32_t>> seen;
  std::set<std::string> ids;
  for (const auto& v : views) {
    if (v.vector.size() != dims_) {
      throw DimensionError("indexed view (" + v.doc_id + ", " + std::to_string(v.view_id) + ") has " +
                           std::to_string(v.vector.size()) + " dims, expected " + std::to_string(dims_));
    }
    if (!std::all_of(v.vector.begin(), v.vector.end(), [](float x) { return std::isfinite(x); })) {
      throw IndexError("indexed view (" + v.doc_id + ", " + std::to_string(v.view_id) + ") is not finite");
    }
    if (!seen.emplace(v.doc_id, v.view_id).second) {
      throw IndexError("duplicate (doc_id, view_id) = (" + v.doc_id + ", " + std::to_string(v.view_id) + ")");
    }
    ids.insert(v.doc_id);
  }
  doc_ids_.assign(ids.begin(), ids.end());
  count_ = views.size();
}

std::uint32_t MultiViewIndex::ordinal(const std::string& doc_id) const {
  auto it = std::lower_bound(doc_ids_.begin(), doc_ids_.end(), doc_id);
  return static_cast<std::uint32_t>(it - doc_ids_.begin());
}

std::vector<std::pair<std::string, std::uint32_t>> MultiViewIndex::list_members(std::size_t list) const {
  const auto& l = lists_.at(list);
  std::vector<std::pair<std::string, std::uint32_t>> out;
  for (std::size_t i = 0; i < l.docs.size(); ++i) out.emplace_back(doc_ids_[l.docs[i]], l.views[i]);
  return out;
}

namespace {

// Entries of one list sorted by (doc ordinal, view id).
void fill_list(std::vector<std::size_t>& members, const std::vector<IndexedView>& views,
               const std::vector<std::uint32_t>& ordinals, std::size_t dims, std::vector<std::uint32_t>& docs,
               std::vector<std::uint32_t>& vids, std::vector<float>& vecs) {
  std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(ordinals[a], views[a].view_id) < std::tie(ordinals[b], views[b].view_id);
  });
  for (auto m : members) {
    docs.push_back(ordinals[m]);
    vids.push_back(views[m].view_id);
    vecs.insert(vecs.end(), views[m].vector.begin(), views[m].vector.end());
  }
  (void)dims;
}

}  // namespace

FlatIndex FlatIndex::build(const std::vector<IndexedView>& views) {
  FlatIndex idx;
  idx.init_docs(views);
  std::vector<std::uint32_t> ord(views.size());
  for (std::size_t i = 0; i < views.size(); ++i) ord[i] = idx.ordinal(views[i].doc_id);
  std::vector<std::size_t> members(views.size());
  std::iota(members.begin(), members.end(), 0);
  idx.lists_.resize(1);
  auto& l = idx.lists_[0];
  fill_list(members, views, ord, idx.dims_, l.docs, l.views, l.vectors);
  return idx;
}

std::vector<std::size_t> FlatIndex::select_lists(std::span<const double>, std::size_t, std::size_t&) const {
  return {0};
}

IvfIndex IvfIndex::build(const std::vector<IndexedView>& views, const KMeansOptions& opts) {
  IvfIndex idx;
  idx.init_docs(views);
  const std::size_t n = views.size(), dims = idx.dims_;
  if (opts.k == 0) throw ConfigError("ivf: K must be >= 1");
  if (opts.k > n) {
    throw ConfigError("ivf: K=" + std::to_string(opts.k) + " exceeds the number of vectors (" + std::to_string(n) + ")");
  }
  std::vector<float> data;
  data.reserve(n * dims);
  for (const auto& v : views) data.insert(data.end(), v.vector.begin(), v.vector.end());
  const auto km = kmeans(data, n, dims, opts);
  idx.iterations_ = km.iterations;
  idx.centroids_.assign(km.centroids.begin(), km.centroids.end());

  // Final assignment against the stored (f32) centroids, ties to the lowest id.
  std::vector<std::vector<std::size_t>> members(opts.k);
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t c = 0; c < opts.k; ++c) {
      double d = 0.0;
      for (std::size_t j = 0; j < dims; ++j) {
        const double diff = static_cast<double>(data[i * dims + j]) - static_cast<double>(idx.centroids_[c * dims + j]);
        d += diff * diff;
      }
      if (d < best) {
        best = d;
        arg = c;
      }
    }
    members[arg].push_back(i);
  }
  std::vector<std::uint32_t> ord(n);
  for (std::size_t i = 0; i < n; ++i) ord[i] = idx.ordinal(views[i].doc_id);
  idx.lists_.resize(opts.k);
  for (std::size_t c = 0; c < opts.k; ++c) {
    auto& l = idx.lists_[c];
    fill_list(members[c], views, ord, dims, l.docs, l.views, l.vectors);
  }
  return idx;
}

std::vector<std::size_t> IvfIndex::select_lists(std::span<const double> query, std::size_t nprobe,
                                                std::size_t& scanned) const {
  const std::size_t kk = k();
  std::vector<std::pair<double, std::size_t>> order(kk);
  for (std::size_t c = 0; c < kk; ++c) {
    const float* cv = &centroids_[c * dims_];
    double norm = 0.0;
    for (std::size_t j = 0; j < dims_; ++j) norm += static_cast<double>(cv[j]) * static_cast<double>(cv[j]);
    order[c] = {norm - 2.0 * dot_f(query, cv, dims_), c};
  }
  scanned += kk;
  const std::size_t take = std::min(std::max<std::size_t>(nprobe, 1), kk);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end());
  std::vector<std::size_t> out(take);
  for (std::size_t i = 0; i < take; ++i) out[i] = order[i].second;
  return out;
}

void IvfIndex::write_centroids(std::ostream& out) const {
  for (float v : centroids_) io::write_f32(out, v);
}

void MultiViewIndex::check_query(std::span<const double> query, std::size_t top_k) const {
  if (count_ == 0) throw IndexError("search on an empty index");
  if (top_k == 0) throw ConfigError("top_k must be >= 1");
  if (query.size() != dims_) {
    throw DimensionError("query has " + std::to_string(query.size()) + " dims, index has " + std::to_string(dims_));
  }
}

void MultiViewIndex::scan(std::span<const double> query, std::size_t nprobe, Scratch& s, SearchResult& acc) const {
  s.next();
  const auto lists = select_lists(query, nprobe, acc.vectors_scanned);
  acc.probes_done += lists.size();
  for (auto li : lists) {
    const auto& l = lists_[li];
    const std::size_t m = l.docs.size();
    const float* vecs = l.vectors.data();
    for (std::size_t e = 0; e < m; ++e) s.offer(l.docs[e], dot_f(query, vecs + e * dims_, dims_), l.views[e]);
    acc.vectors_scanned += m;
  }
}

namespace {

void rank_candidates(std::vector<Candidate>& c, std::size_t top_k) {
  const std::size_t take = std::min(top_k, c.size());
  auto better = [](const Candidate& a, const Candidate& b) {
    return a.score > b.score || (a.score == b.score && a.doc < b.doc);
  };
  std::partial_sort(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(take), c.end(), better);
  c.resize(take);
}

}  // namespace

SearchResult MultiViewIndex::top_hits(Scratch& s, std::span<const double> totals, std::size_t top_k,
                                      SearchResult acc) const {
  std::vector<Candidate> cands;
  cands.reserve(s.touched.size());
  for (auto d : s.touched) cands.push_back({d, totals.empty() ? s.best[d] : totals[d], s.view[d]});
  rank_candidates(cands, top_k);
  for (const auto& c : cands) acc.hits.push_back({doc_ids_[c.doc], c.score, c.view});
  return acc;
}

SearchResult MultiViewIndex::search(std::span<const double> query, std::size_t top_k, std::size_t nprobe) const {
  check_query(query, top_k);
  Scratch s(doc_count());
  SearchResult acc;
  scan(query, nprobe, s, acc);
  return top_hits(s, {}, top_k, std::move(acc));
}

SearchResult MultiViewIndex::search_sum_max(const ViewMatrix& q, std::size_t top_k, std::size_t nprobe) const {
  const auto rows = q.valid_indices();
  if (rows.empty()) throw ScoringError("query '" + q.owner_id + "' has no valid views");
  for (auto r : rows) check_query(q.view(r), top_k);
  const std::size_t n = doc_count();
  Scratch s(n);
  SearchResult acc;
  std::vector<double> sums(n, 0.0), seen_min(n, 0.0), best_single(n, -std::numeric_limits<double>::infinity());
  std::vector<std::uint32_t> hits(n, 0), best_view(n, 0);
  std::vector<std::uint32_t> candidates;
  double total_min = 0.0;
  for (auto r : rows) {
    scan(q.view(r), nprobe, s, acc);
    double vmin = std::numeric_limits<double>::infinity();
    for (auto d : s.touched) vmin = std::min(vmin, s.best[d]);
    if (s.touched.empty()) vmin = 0.0;
    total_min += vmin;
    for (auto d : s.touched) {
      if (hits[d]++ == 0) candidates.push_back(d);
      sums[d] += s.best[d];
      seen_min[d] += vmin;
      if (s.best[d] > best_single[d]) {
        best_single[d] = s.best[d];
        best_view[d] = s.view[d];
      }
    }
  }
  // A document missed by some view's probes is credited that view's lowest
  // scanned maximum. With exhaustive probing every document is hit by every
  // view and the sum is exact.
  std::vector<Candidate> cands;
  cands.reserve(candidates.size());
  for (auto d : candidates) {
    const double score = hits[d] == rows.size() ? sums[d] : sums[d] + (total_min - seen_min[d]);
    cands.push_back({d, score, best_view[d]});
  }
  rank_candidates(cands, top_k);
  for (const auto& c : cands) acc.hits.push_back({doc_ids_[c.doc], c.score, c.view});
  return acc;
}

SearchResult MultiViewIndex::search_max_max(const ViewMatrix& q, std::size_t top_k, std::size_t nprobe) const {
  const auto rows = q.valid_indices();
  if (rows.empty()) throw ScoringError("query '" + q.owner_id + "' has no valid views");
  for (auto r : rows) check_query(q.view(r), top_k);
  const std::size_t n = doc_count();
  Scratch s(n);
  SearchResult acc;
  std::vector<double> best(n, -std::numeric_limits<double>::infinity());
  std::vector<std::uint32_t> best_view(n, 0);
  std::vector<std::uint8_t> seen(n, 0);
  std::vector<std::uint32_t> candidates;
  for (auto r : rows) {
    scan(q.view(r), nprobe, s, acc);
    for (auto d : s.touched) {
      if (!seen[d]) seen[d] = 1, candidates.push_back(d);
      if (s.best[d] > best[d]) best[d] = s.best[d], best_view[d] = s.view[d];
    }
  }
  std::vector<Candidate> cands;
  for (auto d : candidates) cands.push_back({d, best[d], best_view[d]});
  rank_candidates(cands, top_k);
  for (const auto& c : cands) acc.hits.push_back({doc_ids_[c.doc], c.score, c.view});
  return acc;
}

SearchResult MultiViewIndex::search_routed(const ViewMatrix& q, const RoutingOutput& r, std::size_t top_k,
                                           std::size_t nprobe) const {
  if (r.selected >= q.views() || !q.is_valid(r.selected)) {
    throw RoutingError("routed search: selected view " + std::to_string(r.selected) + " is not valid for '" +
                       q.owner_id + "'");
  }
  return search(q.view(r.selected), top_k, nprobe);
}

void MultiViewIndex::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  io::write_magic(out, "FLIX");
  io::write_u32(out, kIndexVersion);
  io::write_u8(out, static_cast<std::uint8_t>(kind()));
  io::write_u64(out, dims_);
  io::write_u64(out, count_);
  io::write_u64(out, centroid_count());
  write_centroids(out);
  for (const auto& l : lists_) {
    io::write_u64(out, l.docs.size());
    for (std::size_t e = 0; e < l.docs.size(); ++e) {
      io::write_string(out, doc_ids_[l.docs[e]]);
      io::write_u32(out, l.views[e]);
      for (std::size_t j = 0; j < dims_; ++j) io::write_f32(out, l.vectors[e * dims_ + j]);
    }
  }
  if (!out) throw FormatError("write failed for " + path);
}

void MultiViewIndex::read_payload(std::istream& in, std::size_t lists, std::size_t dims, std::size_t count,
                                  MultiViewIndex& into) {
  std::vector<std::vector<IndexedView>> raw(lists);
  std::size_t total = 0;
  for (auto& l : raw) {
    const auto m = io::read_u64(in);
    if (total + m > count) throw FormatError("index payload holds more vectors than its header declares");
    l.reserve(m);
    for (std::uint64_t e = 0; e < m; ++e) {
      IndexedView v;
      v.doc_id = io::read_string(in);
      v.view_id = io::read_u32(in);
      v.vector.resize(dims);
      for (auto& x : v.vector) x = io::read_f32(in);
      l.push_back(std::move(v));
    }
    total += m;
  }
  if (total != count) throw FormatError("index payload holds fewer vectors than its header declares");
  std::vector<IndexedView> all;
  all.reserve(total);
  for (const auto& l : raw) all.insert(all.end(), l.begin(), l.end());
  into.init_docs(all);
  into.lists_.resize(lists);
  for (std::size_t li = 0; li < lists; ++li) {
    auto& l = into.lists_[li];
    for (const auto& v : raw[li]) {
      l.docs.push_back(into.ordinal(v.doc_id));
      l.views.push_back(v.view_id);
      l.vectors.insert(l.vectors.end(), v.vector.begin(), v.vector.end());
    }
  }
}

std::unique_ptr<MultiViewIndex> load_index(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IndexError("cannot open index " + path);
  try {
    io::expect_magic(in, "FLIX", path);
    const auto version = io::read_u32(in);
    if (version != kIndexVersion) throw FormatError("unsupported index version " + std::to_string(version));
    const auto kind = io::read_u8(in);
    const auto dims = io::read_u64(in);
    const auto count = io::read_u64(in);
    const auto k = io::read_u64(in);
    if (dims == 0 || dims > (1u << 20)) throw FormatError("index dims out of range");
    if (kind == static_cast<std::uint8_t>(IndexKind::flat)) {
      if (k != 0) throw FormatError("flat index declares centroids");
      auto idx = std::unique_ptr<FlatIndex>(new FlatIndex());
      FlatIndex::read_payload(in, 1, dims, count, *idx);
      return idx;
    }
    if (kind == static_cast<std::uint8_t>(IndexKind::ivf)) {
      if (k == 0 || k > count) throw FormatError("ivf index K out of range");
      auto idx = std::unique_ptr<IvfIndex>(new IvfIndex());
      idx->centroids_.resize(k * dims);
      for (auto& v : idx->centroids_) v = io::read_f32(in);
      IvfIndex::read_payload(in, k, dims, count, *idx);
      return idx;
    }
    throw FormatError("unknown index kind byte " + std::to_string(kind));
  } catch (const IndexError&) {
    throw;
  } catch (const Error& e) {
    throw IndexError("cannot load index " + path + ": " + e.what());
  }
}

FlatIndex FlatIndex::load(const std::string& path) {
  auto p = load_index(path);
  if (p->kind() != IndexKind::flat) throw IndexKindError(path + " holds an " + to_string(p->kind()) + " index, not flat");
  return std::move(static_cast<FlatIndex&>(*p));
}

IvfIndex IvfIndex::load(const std::string& path) {
  auto p = load_index(path);
  if (p->kind() != IndexKind::ivf) throw IndexKindError(path + " holds a " + to_string(p->kind()) + " index, not ivf");
  return std::move(static_cast<IvfIndex&>(*p));
}

}  // namespace fastlane
