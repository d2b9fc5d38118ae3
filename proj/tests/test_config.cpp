#include <doctest.h>

#include "micas/config.hpp"
#include "micas/error.hpp"

using namespace micas;

TEST_CASE("profiles") {
  const RunConfig desk = RunConfig::desk();
  CHECK(desk.points == 256);
  CHECK(desk.centers == 16);
  CHECK(desk.patch_size == 16);
  CHECK(desk.sampler_epochs == 30);
  CHECK(desk.ranker_epochs == 10);
  CHECK(desk.candidates == 8);
  CHECK(desk.alpha == 0.5);

  const RunConfig paper = RunConfig::paper();
  CHECK(paper.points == 1024);
  CHECK(paper.centers == 64);
  CHECK(paper.patch_size == 32);
  CHECK(paper.sampler_lr0 == 1e-4);
  CHECK(paper.sampler_lr_min == 1e-6);
  CHECK(paper.sampler_epochs == 60);
  CHECK(paper.sampler_batch == 72);
  CHECK(paper.ranker_epochs == 30);
  CHECK(paper.ranker_batch == 9);
  CHECK(paper.candidates == 8);
  CHECK_NOTHROW(paper.validate());
  CHECK_THROWS_AS(RunConfig::for_profile("laptop"), Error);
}

TEST_CASE("parse, overrides and serialization round trip") {
  const RunConfig c = RunConfig::parse(
      "# comment\nprofile = paper\nseed = 42\npoints=512\n\ntasks = denoising, registration\nlevels = 2,4\noptimizer = sgd\n");
  CHECK(c.profile == "paper");
  CHECK(c.seed == 42);
  CHECK(c.points == 512);
  CHECK(c.centers == 64);
  CHECK(c.tasks == std::vector<TaskKind>{TaskKind::Denoising, TaskKind::Registration});
  CHECK(c.levels == std::vector<int>{2, 4});
  CHECK(c.optimizer == ad::OptimizerKind::Sgd);

  const RunConfig back = RunConfig::parse(c.serialize());
  CHECK(back.serialize() == c.serialize());
  CHECK(back.hash() == c.hash());

  RunConfig d = RunConfig::desk();
  const auto h = d.hash();
  d.set("mask_ratio", "0.5");
  CHECK(d.get("mask_ratio") == "0.5");
  CHECK(d.hash() != h);
  for (const auto& key : RunConfig::keys()) CHECK_NOTHROW(d.get(key));
}

TEST_CASE("rejections") {
  auto kind_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Contract;
  };
  CHECK(kind_of([] { RunConfig::parse("no_such_key = 1\n"); }) == ErrorKind::Configuration);
  CHECK(kind_of([] { RunConfig::parse("points = many\n"); }) == ErrorKind::Configuration);
  CHECK(kind_of([] { RunConfig::parse("points 12\n"); }) == ErrorKind::Configuration);
  CHECK(kind_of([] { RunConfig::parse("tasks = painting\n").validate(); }) != ErrorKind::Contract);
  CHECK(kind_of([] { RunConfig::parse("levels = 6\n").validate(); }) == ErrorKind::Configuration);
  CHECK(kind_of([] { RunConfig::parse("centers = 300\n").validate(); }) == ErrorKind::Configuration);
  CHECK(kind_of([] { RunConfig::parse("sampler_lr0 = 1e-7\n").validate(); }) == ErrorKind::Configuration);
  CHECK(kind_of([] { RunConfig::load("/nonexistent/run.cfg"); }) == ErrorKind::Io);
}

TEST_CASE("derived module configs follow the run config") {
  RunConfig c = RunConfig::desk();
  c.d1 = 12;
  c.centers = 5;
  c.patch_size = 7;
  CHECK(c.sampler().d1 == 12);
  CHECK(c.sampler().num_centers == 5);
  CHECK(c.surrogate().task_width == 12);
  CHECK(c.surrogate().patch_size == 7);
}
