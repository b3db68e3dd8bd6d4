#include "denc/losses.hpp"

namespace denc {

Distance parse_distance(const std::string& name) {
  if (name == "l1") return Distance::l1;
  if (name == "l2") return Distance::l2;
  if (name == "cosine") return Distance::cosine;
  throw std::runtime_error("unknown distance metric '" + name + "' (expected l1|l2|cosine)");
}

MiningStrategy parse_strategy(const std::string& name) {
  if (name == "batch_all") return MiningStrategy::batch_all;
  if (name == "hard") return MiningStrategy::hard;
  if (name == "semi_hard") return MiningStrategy::semi_hard;
  if (name == "random") return MiningStrategy::random;
  throw std::runtime_error("unknown mining strategy '" + name +
                           "' (expected batch_all|hard|semi_hard|random)");
}

std::string to_string(Distance metric) {
  switch (metric) {
    case Distance::l1: return "l1";
    case Distance::l2: return "l2";
    case Distance::cosine: return "cosine";
  }
  return "?";
}

std::string to_string(MiningStrategy strategy) {
  switch (strategy) {
    case MiningStrategy::batch_all: return "batch_all";
    case MiningStrategy::hard: return "hard";
    case MiningStrategy::semi_hard: return "semi_hard";
    case MiningStrategy::random: return "random";
  }
  return "?";
}

}  // namespace denc
