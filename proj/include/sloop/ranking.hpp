#pragma once

#include <string>
#include <vector>

namespace sloop {

struct RankedCandidate {
  std::string candidate_id;
  double score = 0.0;
  int tier = 0;  // number of cascade stages the candidate survived
};

// Candidates for one query, best first.
struct RankedList {
  std::string query_id;
  std::vector<RankedCandidate> items;
};

}  // namespace sloop
