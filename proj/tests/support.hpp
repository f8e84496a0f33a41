#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "irtbias/item_bank.hpp"
#include "irtbias/response_store.hpp"
#include "irtbias/simulator.hpp"

namespace testsupport {

inline std::string data_path(const std::string& name) { return std::string(IRTBIAS_TEST_DATA) + "/" + name; }

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::string& path, const std::string& bytes) {
  std::ofstream o(path, std::ios::binary | std::ios::trunc);
  o << bytes;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / ("irtbias_test_" + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Small bank with ids 1..n; ids in recode are reverse-coded.
inline std::shared_ptr<const irtbias::ItemBank> small_bank(int n, std::set<int> recode = {}) {
  std::vector<irtbias::Item> items;
  for (int i = 1; i <= n; ++i) {
    items.push_back({i, "Statement " + std::to_string(i), irtbias::Subscale::social, false, {}});
  }
  return std::make_shared<const irtbias::ItemBank>(std::move(items), "test", std::move(recode));
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

// One N(0,1) group, default item ranges.
inline irtbias::SimSpec one_group_spec(int n_items, int n_resp, std::uint64_t seed,
                                       irtbias::SimStages stages = irtbias::SimStages::both) {
  irtbias::SimSpec s;
  s.n_items = n_items;
  s.n_respondents_per_group = n_resp;
  s.seed = seed;
  s.stages = stages;
  s.groups = {irtbias::SimGroup{"g", 0.0, 0.0, 1.0, {}, {}}};
  return s;
}

}  // namespace testsupport
