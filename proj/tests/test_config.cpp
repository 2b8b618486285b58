#include <doctest.h>

#include <set>
#include <sstream>

#include "robustkit/config.hpp"
#include "robustkit/error.hpp"

using namespace robustkit;

namespace {

RunConfig from_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find(" = ");
    std::string value = line.substr(eq + 3);
    cfg.set(line.substr(0, eq), value.substr(1, value.size() - 2));
  }
  return cfg;
}

std::string field_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<none>";
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("numbers") {
  CHECK(parse_number("epsilon", "8/255") == 8.0 / 255.0);
  CHECK(parse_number("epsilon", "1e-3") == 1e-3);
  CHECK(parse_number("epsilon", " 0.5 ") == 0.5);
  CHECK(field_of([] { parse_number("epsilon", "abc"); }) == "epsilon");
  CHECK(field_of([] { parse_number("epsilon", "1/0"); }) == "epsilon");
  CHECK(field_of([] { parse_number("lr", "0.1x"); }) == "lr");
  for (double v : {0.1, 1.0 / 3.0, 8.0 / 255.0, 1e-300, 12345.678}) {
    CHECK(parse_number("x", format_number(v)) == v);
  }
}

TEST_CASE("registry keys are unique and cover every group") {
  std::set<std::string> names;
  for (const auto& k : config_keys()) CHECK(names.insert(k.name).second);
  for (const char* k : {"dataset", "widths", "epochs", "loss_mode", "epsilon", "eval_attacks", "resolution",
                        "sparsity_eps", "out", "checkpoint", "seed", "lr_milestones"}) {
    CHECK(names.count(k) == 1);
  }
}

TEST_CASE("effective configuration round-trips") {
  RunConfig cfg;
  cfg.set("dataset", "two_gaussians");
  cfg.set("widths", "2,8,3");
  cfg.set("epsilon", "8/255");
  cfg.set("lr_milestones", "5:0.5,9:0.1");
  cfg.set("clip", "0,1");
  cfg.set("alpha", "0.01");
  cfg.set("sparsity_eps", "0.05,0.1");
  cfg.set("early_stop", "best_pgd_val");
  cfg.set("loss_mode", "qub_decreasing");
  std::string text = cfg.to_text();
  CHECK(text.rfind("# robustkit ", 0) == 0);
  RunConfig back = from_text(text);
  CHECK(back.to_text() == text);
  CHECK(back.plan.attack.epsilon == 8.0 / 255.0);
  CHECK(back.plan.lr_milestones.size() == 2);
  CHECK(back.model.layer_widths == std::vector<std::size_t>{2, 8, 3});
  CHECK(back.get("loss_mode") == "qub_decreasing");

  RunConfig defaults;
  CHECK(from_text(defaults.to_text()).to_text() == defaults.to_text());
  CHECK(defaults.get("alpha") == "auto");
}

TEST_CASE("bad values name their key") {
  RunConfig cfg;
  CHECK(field_of([&] { cfg.set("nope", "1"); }) == "nope");
  CHECK(field_of([&] { cfg.set("loss_mode", "trades"); }) == "loss_mode");
  CHECK(field_of([&] { cfg.set("dataset", "cifar"); }) == "dataset");
  CHECK(field_of([&] { cfg.set("epochs", "three"); }) == "epochs");
  CHECK(field_of([&] { cfg.set("lr_milestones", "5"); }) == "lr_milestones");
  CHECK(field_of([&] { cfg.set("clip", "1"); }) == "clip");
  RunConfig attacks;
  CHECK(field_of([&] { attacks.set("eval_attacks", "cw"); attacks.validate(); }) == "eval_attacks");
  RunConfig epochs;
  CHECK(field_of([&] { epochs.set("epochs", "-3"); epochs.validate(); }) == "epochs");
}

TEST_CASE("validation") {
  RunConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.set("n", "7");
  CHECK(field_of([&] { cfg.validate(); }) == "n");
  RunConfig idx;
  idx.set("dataset", "idx");
  CHECK(field_of([&] { idx.validate(); }) == "idx_images");
  RunConfig eps;
  eps.set("epsilon", "-0.1");
  CHECK(field_of([&] { eps.validate(); }) == "epsilon");
  RunConfig sp;
  sp.set("sparsity_eps", "0");
  CHECK(field_of([&] { sp.validate(); }) == "sparsity_eps");
}

}
