#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "interflow/config.hpp"
#include "interflow/schedule.hpp"

using namespace interflow;

TEST_CASE("milestone schedule halves after epochs 3, 6, 8 and 10") {
  const auto lr = replay_lr(TrainingSchedule::pretrain_default(), std::vector<double>(12, 1.0));
  REQUIRE(lr.size() == 12);
  const std::vector<double> expected{1e-4,   1e-4,   1e-4,   5e-5,    5e-5,    5e-5,
                                     2.5e-5, 2.5e-5, 1.25e-5, 1.25e-5, 6.25e-6, 6.25e-6};
  for (int i = 0; i < 12; ++i) CHECK(lr[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("plateau schedule") {
  const TrainingSchedule s = TrainingSchedule::finetune_default();
  const auto constant = replay_lr(s, std::vector<double>(45, 2.0));
  for (int i = 0; i < 20; ++i) CHECK(constant[i] == 1e-4);
  CHECK(constant[20] == 5e-5);
  CHECK(constant[39] == 5e-5);
  CHECK(constant[40] == 2.5e-5);

  std::vector<double> improving(30);
  for (int i = 0; i < 30; ++i) improving[i] = 10.0 - i;
  for (double lr : replay_lr(s, improving)) CHECK(lr == 1e-4);

  LrScheduler sch(s);
  CHECK_THROWS_AS(sch.end_epoch(std::nullopt), StateError);
}

TEST_CASE("short schedule and validation") {
  const TrainingSchedule s = TrainingSchedule::s_short(12);
  CHECK(s.milestones == std::vector<int>{6, 8, 10});
  TrainingSchedule bad;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.milestones = {5, 3};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("scheduler state restores mid-run") {
  const TrainingSchedule s = TrainingSchedule::finetune_default();
  LrScheduler a(s);
  for (int i = 0; i < 15; ++i) a.end_epoch(1.0);
  LrScheduler b(s);
  b.restore(a.state());
  for (int i = 0; i < 10; ++i) CHECK(a.end_epoch(1.0) == b.end_epoch(1.0));
  CHECK(a.lr() == b.lr());
}

TEST_CASE("config defaults carry the reference schedule") {
  const Config cfg = Config::defaults();
  const TrainingSchedule p = schedule_from_config(cfg, "pretrain");
  CHECK(p.initial_lr == 1e-4);
  CHECK(p.batch_size == 8);
  CHECK(p.milestones == std::vector<int>{3, 6, 8, 10});
  CHECK(p.total_epochs == 12);
  CHECK(p.policy == LrPolicy::Milestones);
  const TrainingSchedule f = schedule_from_config(cfg, "finetune");
  CHECK(f.policy == LrPolicy::Plateau);
  CHECK(f.patience == 20);
  CHECK(f.loss == LossKind::Epe);
  CHECK(network_spec_from_config(cfg) == NetworkSpec::reference());
}

TEST_CASE("config layering and unknown keys") {
  Config cfg = Config::defaults();
  cfg.merge_yaml("seed: 5\npretrain:\n  lr: 0.002\n  milestones: [2, 4]\nmodel:\n  width_divisor: 16\n");
  CHECK(cfg.get_u64("seed") == 5);
  CHECK(cfg.get_double("pretrain.lr") == 0.002);
  CHECK(cfg.get_int_list("pretrain.milestones") == std::vector<int>{2, 4});
  CHECK(network_spec_from_config(cfg) == NetworkSpec::reference().scaled(16));
  cfg.set("seed", "9");
  CHECK(cfg.get_int("seed") == 9);
  try {
    cfg.merge_yaml("bogus: 1\npretrain:\n  lrr: 3\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bogus") != std::string::npos);
    CHECK(std::string(e.what()).find("pretrain.lrr") != std::string::npos);
  }
  CHECK_THROWS_AS(cfg.set("nope", "1"), ConfigError);
  cfg.set("seed", "abc");
  CHECK_THROWS_AS(cfg.get_int("seed"), ConfigError);
}

TEST_CASE("dumped config re-parses to the same values") {
  Config cfg = Config::defaults();
  cfg.set("synthetic.corpus", "a: b # c");
  cfg.set("pretrain.lr", "3e-4");
  Config back = Config::defaults();
  back.merge_yaml(cfg.dump());
  CHECK(back.values() == cfg.values());
  const auto path = std::filesystem::temp_directory_path() / "interflow_test_cfg.yaml";
  cfg.save(path);
  Config from_file = Config::defaults();
  from_file.merge_file(path);
  CHECK(from_file.values() == cfg.values());
}

TEST_CASE("typed views") {
  Config cfg = Config::defaults();
  cfg.set("synthetic.velocity", "6,0");
  cfg.set("augment.hflip", "false");
  cfg.set("data.split_policy", "sequence");
  CHECK(synthetic_from_config(cfg).fixed_velocity == std::array<double, 2>{6.0, 0.0});
  CHECK_FALSE(augment_from_config(cfg).hflip);
  CHECK(split_from_config(cfg).policy == SplitPolicy::Sequence);
  cfg.set("finetune.lr_policy", "s_short");
  cfg.set("finetune.epochs", "60");
  CHECK(schedule_from_config(cfg, "finetune").milestones == std::vector<int>{30, 40, 50});
  cfg.set("finetune.lr_policy", "cosine");
  CHECK_THROWS_AS(schedule_from_config(cfg, "finetune"), ConfigError);
}
