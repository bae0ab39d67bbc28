#include "idea/serialization.hpp"

namespace idea {

using nlohmann::json;

void to_json(json& j, const FusionConfig& c) {
  j = json{{"alpha", c.alpha}, {"beta", c.beta}, {"theta", c.theta}};
}

// Missing keys keep their defaults.
void from_json(const json& j, FusionConfig& c) {
  c.alpha = j.value("alpha", c.alpha);
  c.beta = j.value("beta", c.beta);
  c.theta = j.value("theta", c.theta);
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"learning_rate", c.learning_rate}, {"epochs", c.epochs},
           {"batch_size", c.batch_size},       {"seed", c.seed},
           {"lr_schedule", LrScheduleName(c.lr_schedule)},
           {"momentum", c.momentum},           {"weight_decay", c.weight_decay}};
}

void from_json(const json& j, TrainConfig& c) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  if (j.contains("lr_schedule")) c.lr_schedule = ParseLrSchedule(j.at("lr_schedule").get<std::string>());
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
}

void to_json(json& j, const GridSpec& g) {
  j = json{{"alphas", g.alphas}, {"betas", g.betas}, {"thetas", g.thetas}};
}

void from_json(const json& j, GridSpec& g) {
  const GridSpec defaults = GridSpec::Default();
  g.alphas = j.value("alphas", defaults.alphas);
  g.betas = j.value("betas", defaults.betas);
  g.thetas = j.value("thetas", defaults.thetas);
}

}  // namespace idea
