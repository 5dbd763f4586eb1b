#include <map>
#include <string>

#include "bbf/error.hpp"
#include "bbf/rng.hpp"
#include "bbf/serialize.hpp"

namespace bbf {

json to_json(const FeatureStore& store) {
  json samples = json::array();
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    const auto& data = store.split(s);
    for (std::size_t i = 0; i < data.labels.size(); ++i)
      samples.push_back({{"class", data.labels[i]},
                         {"split", std::string(to_string(s))},
                         {"feature", vector_to_json(data.features.row(static_cast<Eigen::Index>(i)).transpose())}});
  }
  return {{"F", store.F}, {"classes", store.classes}, {"samples", std::move(samples)}};
}

namespace {

void append(SplitData& data, const Eigen::VectorXd& x, int label) {
  const auto n = data.features.rows();
  data.features.conservativeResize(n + 1, x.size());
  data.features.row(n) = x.transpose();
  data.labels.push_back(label);
}

}  // namespace

FeatureStore features_from_json(const json& j, int k, std::uint64_t sampling_seed) {
  FeatureStore store;
  try {
    store.F = j.at("F").get<int>();
    store.classes = j.at("classes").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("feature file: ") + e.what());
  }
  if (store.F < 1 || store.classes.size() < 2)
    throw Error(ErrorKind::InvalidConfig, "feature file needs F >= 1 and at least two classes");
  const int num_classes = store.num_classes();
  for (auto& s : store.splits) s.features.resize(0, store.F);

  bool has_val = false;
  // Per-class pools in file order.
  std::map<std::string, std::vector<std::vector<Eigen::VectorXd>>> pools;
  for (const auto& sample : j.at("samples")) {
    const int c = sample.at("class").get<int>();
    const auto split = sample.at("split").get<std::string>();
    if (c < 0 || c >= num_classes)
      throw Error(ErrorKind::LabelOutOfRange, "feature file sample with class " + std::to_string(c));
    Eigen::VectorXd x = vector_from_json(sample.at("feature"), "feature");
    if (x.size() != store.F)
      throw Error(ErrorKind::ShapeMismatch, "feature of length " + std::to_string(x.size()) +
                                                " in a file declaring F=" + std::to_string(store.F));
    parse_split(split);
    has_val |= split == "val";
    auto& pool = pools[split];
    pool.resize(num_classes);
    pool[c].push_back(std::move(x));
  }

  auto pool_of = [&](const std::string& name) -> std::vector<std::vector<Eigen::VectorXd>>& {
    auto& pool = pools[name];
    pool.resize(num_classes);
    return pool;
  };

  if (has_val) {
    for (Split s : {Split::Train, Split::Val, Split::Test}) {
      auto& pool = pool_of(std::string(to_string(s)));
      for (int c = 0; c < num_classes; ++c)
        for (const auto& x : pool[c]) append(store.split(s), x, c);
    }
    return store;
  }

  if (k < 1) throw Error(ErrorKind::InvalidK, "k must be >= 1");
  auto& train_pool = pool_of("train");
  Rng rng(sampling_seed);
  for (int c = 0; c < num_classes; ++c) {
    auto& pool = train_pool[c];
    if (static_cast<int>(pool.size()) < 2 * k)
      throw Error(ErrorKind::InvalidK, "class " + std::to_string(c) + " has " +
                                           std::to_string(pool.size()) + " training samples, need 2k=" +
                                           std::to_string(2 * k));
    std::vector<int> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    rng.shuffle(order.begin(), order.end());
    for (int i = 0; i < k; ++i) append(store.split(Split::Train), pool[order[i]], c);
    for (int i = k; i < 2 * k; ++i) append(store.split(Split::Val), pool[order[i]], c);
  }
  auto& test_pool = pool_of("test");
  for (int c = 0; c < num_classes; ++c)
    for (const auto& x : test_pool[c]) append(store.split(Split::Test), x, c);
  return store;
}

}  // namespace bbf
