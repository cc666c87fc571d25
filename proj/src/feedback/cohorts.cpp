#include <algorithm>
#include <numeric>

#include "sloop/error.hpp"
#include "sloop/feedback.hpp"

namespace sloop {

namespace {

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), size_(n, 1) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

}  // namespace

std::map<std::string, std::size_t> CohortPartition::index() const {
  std::map<std::string, std::size_t> out;
  for (std::size_t i = 0; i < cohorts.size(); ++i) {
    for (const auto& m : cohorts[i].members) out[m] = i;
  }
  return out;
}

nlohmann::json to_json(const CohortPartition& p) {
  auto pairs = [](const auto& ps) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& [x, y] : ps) a.push_back({x, y});
    return a;
  };
  nlohmann::json cohorts = nlohmann::json::array();
  for (const auto& c : p.cohorts) {
    cohorts.push_back({{"cohort_id", c.cohort_id}, {"members", c.members}, {"provenance", pairs(c.provenance)}});
  }
  return {{"cohorts", cohorts}, {"conflicts", pairs(p.conflicts)}, {"cannot_link", pairs(p.cannot_link)}};
}

CohortPartition partition_from_json(const nlohmann::json& j) {
  auto pair_of = [](const nlohmann::json& x) {
    return make_pair_key(x.at(0).get<std::string>(), x.at(1).get<std::string>());
  };
  CohortPartition p;
  for (const auto& cj : j.at("cohorts")) {
    Cohort c;
    c.cohort_id = cj.at("cohort_id").get<std::string>();
    c.members = cj.at("members").get<std::vector<std::string>>();
    for (const auto& e : cj.at("provenance")) c.provenance.push_back(pair_of(e));
    p.cohorts.push_back(std::move(c));
  }
  for (const auto& e : j.at("conflicts")) p.conflicts.push_back(pair_of(e));
  for (const auto& e : j.at("cannot_link")) p.cannot_link.insert(pair_of(e));
  return p;
}

CohortPartition merge_cohorts(const std::vector<std::string>& images, const std::vector<ImagePair>& same,
                              const std::vector<ImagePair>& different) {
  std::vector<std::string> nodes(images.begin(), images.end());
  for (const auto& lists : {&same, &different}) {
    for (const auto& [a, b] : *lists) {
      nodes.push_back(a);
      nodes.push_back(b);
    }
  }
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  auto id = [&](const std::string& s) {
    return static_cast<std::size_t>(std::lower_bound(nodes.begin(), nodes.end(), s) - nodes.begin());
  };

  CohortPartition out;
  for (const auto& [a, b] : different) {
    if (a == b) throw validation_error("cannot-link of an image with itself: " + a);
    out.cannot_link.insert(make_pair_key(a, b));
  }
  std::vector<ImagePair> edges;
  for (const auto& [a, b] : same) {
    if (a != b) edges.push_back(make_pair_key(a, b));
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  UnionFind uf(nodes.size());
  std::vector<ImagePair> accepted;
  for (const auto& e : edges) {
    const auto ra = uf.find(id(e.first));
    const auto rb = uf.find(id(e.second));
    if (ra != rb) {
      const bool clash = std::any_of(out.cannot_link.begin(), out.cannot_link.end(), [&](const ImagePair& c) {
        const auto x = uf.find(id(c.first));
        const auto y = uf.find(id(c.second));
        return (x == ra && y == rb) || (x == rb && y == ra);
      });
      if (clash) {
        out.conflicts.push_back(e);
        continue;
      }
      uf.unite(ra, rb);
    } else if (out.cannot_link.count(e)) {
      out.conflicts.push_back(e);
      continue;
    }
    accepted.push_back(e);
  }

  std::map<std::size_t, Cohort> by_root;
  for (std::size_t i = 0; i < nodes.size(); ++i) by_root[uf.find(i)].members.push_back(nodes[i]);
  for (const auto& e : accepted) by_root[uf.find(id(e.first))].provenance.push_back(e);
  for (auto& [root, c] : by_root) {
    c.cohort_id = "c:" + c.members.front();
    out.cohorts.push_back(std::move(c));
  }
  std::sort(out.cohorts.begin(), out.cohorts.end(),
            [](const Cohort& a, const Cohort& b) { return a.cohort_id < b.cohort_id; });
  return out;
}

std::vector<RankedList> apply_cohorts(const std::vector<RankedList>& rankings, const CohortPartition& partition) {
  const auto where = partition.index();
  auto cohort_of = [&](const std::string& img) -> long {
    const auto it = where.find(img);
    return it == where.end() ? -1 : static_cast<long>(it->second);
  };
  // Cohort pairs that may not be merged.
  std::set<std::pair<long, long>> apart;
  for (const auto& [a, b] : partition.cannot_link) {
    const long x = cohort_of(a), y = cohort_of(b);
    if (x >= 0 && y >= 0) {
      apart.insert({x, y});
      apart.insert({y, x});
    }
  }
  std::vector<RankedList> out;
  out.reserve(rankings.size());
  for (const auto& list : rankings) {
    const long cq = cohort_of(list.query_id);
    int top_tier = 0;
    for (const auto& item : list.items) top_tier = std::max(top_tier, item.tier);
    std::vector<RankedCandidate> mates, rest, apart_list;
    for (const auto& item : list.items) {
      const long cc = cohort_of(item.candidate_id);
      RankedCandidate r = item;
      if (cq >= 0 && cc == cq) {
        r.score = 1.0;
        r.tier = top_tier + 1;
        mates.push_back(r);
      } else if (cq >= 0 && cc >= 0 && apart.count({cq, cc})) {
        r.score = 0.0;
        r.tier = -1;
        apart_list.push_back(r);
      } else {
        // Squeeze into (0, 1) so constrained pairs stay strictly outside.
        r.score = 1e-3 + (1.0 - 2e-3) * item.score;
        rest.push_back(r);
      }
    }
    auto by_score = [](const RankedCandidate& a, const RankedCandidate& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.candidate_id < b.candidate_id;
    };
    std::stable_sort(mates.begin(), mates.end(), by_score);
    std::stable_sort(rest.begin(), rest.end(), by_score);
    std::stable_sort(apart_list.begin(), apart_list.end(), by_score);
    RankedList r{list.query_id, {}};
    for (auto* part : {&mates, &rest, &apart_list}) r.items.insert(r.items.end(), part->begin(), part->end());
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace sloop
