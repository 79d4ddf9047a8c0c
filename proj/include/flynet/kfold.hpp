#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "flynet/dataset.hpp"
#include "flynet/error.hpp"

namespace flynet {

// Whole-dataset split for one cross-validation round.
struct FoldPlan {
  std::size_t k = 0;
  std::size_t round = 0;
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;

  friend bool operator==(const FoldPlan&, const FoldPlan&) = default;
};

// Stage-stratified grouped split. Datasets of each stage are shuffled once
// (seeded, identical for every round); round r tests position r and
// validates position r+1 (mod the stage count) of every stage.
inline FoldPlan kfold_split(const Corpus& corpus, std::size_t k, std::size_t round, std::uint64_t seed) {
  detail::require(k >= 3, "kfold_split: k must be >= 3");
  detail::require(round < k, "kfold_split: round must lie in [0, k)");
  std::map<Stage, std::vector<std::string>> by_stage;
  for (const auto& ds : corpus) by_stage[ds.stage].push_back(ds.id);

  std::mt19937_64 rng(seed);
  FoldPlan plan{k, round, {}, {}, {}};
  for (Stage st : kAllStages) {
    auto it = by_stage.find(st);
    if (it == by_stage.end()) continue;
    auto& ids = it->second;
    detail::require(ids.size() >= 3, "kfold_split: stage '" + std::string(to_string(st)) + "' has only " +
                                         std::to_string(ids.size()) + " datasets; at least 3 are required");
    std::shuffle(ids.begin(), ids.end(), rng);
    const std::size_t t = round % ids.size();
    const std::size_t v = (round + 1) % ids.size();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i == t)
        plan.test.push_back(ids[i]);
      else if (i == v)
        plan.val.push_back(ids[i]);
      else
        plan.train.push_back(ids[i]);
    }
  }
  return plan;
}

}  // namespace flynet
