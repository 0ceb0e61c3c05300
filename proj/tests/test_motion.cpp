#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "effortgen/errors.hpp"
#include "effortgen/motion.hpp"
#include "test_support.hpp"

using namespace effortgen;

TEST_SUITE("motion") {

TEST_CASE("motion sequence validates its buffer") {
  CHECK_THROWS_AS(MotionSequence(0, 1, std::vector<double>(6, 0.0)), ValidationError);
  CHECK_THROWS_AS(MotionSequence(20, 1, std::vector<double>(3, 0.0)), ValidationError);
  CHECK_THROWS_AS(MotionSequence(20, 2, std::vector<double>(7, 0.0)), ValidationError);
  std::vector<double> bad(6, 0.0);
  bad[4] = std::nan("");
  CHECK_THROWS_AS(MotionSequence(20, 1, bad), ValidationError);

  const MotionSequence m(30, 1, {0, 1, 2, 3, 4, 5}, "x");
  CHECK(m.frames() == 2);
  CHECK(m.at(1, 0) == Vec3{3, 4, 5});
  CHECK(m.coord(0, 0, 2) == 2.0);
  CHECK(m.with_label(std::nullopt).label() == std::nullopt);
}

TEST_CASE("default group map partitions 22 joints into 7 regions") {
  const GroupMap g = default_group_map();
  CHECK(g.size() == 7);
  CHECK(g.joint_count() == 22);
  CHECK(g.names() == std::vector<std::string>{"root", "left_lower", "right_lower", "spine",
                                              "left_upper", "right_upper", "head"});
  std::vector<int> seen(22, 0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (auto j : g[i].joints) ++seen[j];
  }
  for (int s : seen) CHECK(s == 1);
  CHECK(g.index_of("head") == 6);
  CHECK_THROWS_AS(g.index_of("tail"), ValidationError);
}

TEST_CASE("group map rejects overlap, gaps and bad indices") {
  using G = GroupMap::Group;
  CHECK_THROWS_AS(GroupMap({G{"a", {0, 1}}, G{"b", {1, 2}}}, 3), ValidationError);
  CHECK_THROWS_AS(GroupMap({G{"a", {0}}, G{"b", {2}}}, 3), ValidationError);
  CHECK_THROWS_AS(GroupMap({G{"a", {0, 5}}}, 2), ValidationError);
  CHECK_THROWS_AS(GroupMap({G{"a", {}}, G{"b", {0}}}, 1), ValidationError);
  const GroupMap ok({G{"a", {0, 2}}, G{"b", {1}}}, 3);
  const std::vector<std::size_t> order = {1, 0};
  const GroupMap p = ok.permuted(order);
  CHECK(p[0].name == "b");
  CHECK(GroupMap::from_json(ok.to_json()).names() == ok.names());
}

TEST_CASE("vocabulary lookups") {
  const PromptVocabulary v = default_vocabulary();
  CHECK(v.size() == 14);
  CHECK(v.id_of("a person lunges") == 0);
  CHECK(v.id_of("a person bends over") == 13);
  CHECK_FALSE(v.find("a person flies").has_value());
  CHECK_THROWS_AS(v.id_of("a person flies"), ValidationError);
}

TEST_CASE("motion JSON round trip is exact") {
  Rng rng(3);
  const MotionSequence m = testsupport::random_motion(rng, 7).with_label("a person walks");
  const auto dir = testsupport::fresh_dir("motion_io");
  save_motion(m, dir / "m.json");
  const MotionSequence back = load_motion(dir / "m.json");
  CHECK(back.fps() == m.fps());
  CHECK(back.label() == m.label());
  CHECK(std::equal(back.positions().begin(), back.positions().end(), m.positions().begin()));
}

TEST_CASE("malformed motion files are rejected with typed errors") {
  const auto dir = testsupport::fresh_dir("motion_bad");
  CHECK_THROWS_AS(load_motion(dir / "missing.json"), IoError);
  std::ofstream(dir / "garbage.json") << "{not json";
  CHECK_THROWS_AS(load_motion(dir / "garbage.json"), ParseError);
  std::ofstream(dir / "nan.json") << R"({"fps":20,"frames":[[[0,0,NaN]],[[0,0,0]]]})";
  CHECK_THROWS_AS(load_motion(dir / "nan.json"), ValidationError);
  std::ofstream(dir / "ragged.json") << R"({"fps":20,"frames":[[[0,0,0]],[[0,0,0],[1,1,1]]]})";
  CHECK_THROWS_AS(load_motion(dir / "ragged.json"), ValidationError);
}

TEST_CASE("synthetic motions are deterministic and move only driven regions") {
  const GroupMap g = default_group_map();
  for (std::size_t action = 0; action < 14; ++action) {
    const MotionSequence a = synth_motion(action, 0.1, 1.0, 24, 5);
    const MotionSequence b = synth_motion(action, 0.1, 1.0, 24, 5);
    CHECK(std::equal(a.positions().begin(), a.positions().end(), b.positions().begin()));
    CHECK(a.label() == default_vocabulary()[action]);
    const auto active = synth_active_regions(action);
    for (std::size_t r = 0; r < g.size(); ++r) {
      bool moved = false;
      for (std::size_t t = 1; t < a.frames(); ++t) {
        for (auto j : g[r].joints) moved = moved || !(a.at(t, j) == a.at(0, j));
      }
      const bool driven = std::find(active.begin(), active.end(), r) != active.end();
      CHECK(moved == driven);
    }
  }
  CHECK_THROWS_AS(synth_motion(14, 0.1, 1.0, 24, 0), ValidationError);
  CHECK_THROWS_AS(synth_motion(0, -0.1, 1.0, 24, 0), ValidationError);
  CHECK_THROWS_AS(synth_motion(0, 0.1, 1.0, 3, 0), ValidationError);
}

TEST_CASE("zero amplitude synthesizes the rest pose") {
  const MotionSequence m = synth_motion(2, 0.0, 1.0, 5, 1);
  const auto rest = rest_pose();
  for (std::size_t j = 0; j < rest.size(); ++j) CHECK(m.at(4, j) == rest[j]);
}

TEST_CASE("synthetic corpus cycles actions and skips run records on load") {
  SynthCorpusOptions o;
  o.actions = {1, 4};
  o.count = 5;
  o.frames = 8;
  const auto corpus = synth_corpus(o);
  REQUIRE(corpus.size() == 5);
  CHECK(corpus[2].label() == "a person walks");
  CHECK(corpus[3].label() == "a person waves");
  const auto dir = testsupport::fresh_dir("corpus_load");
  save_motion(corpus[0], dir / "b.json");
  save_motion(corpus[1], dir / "a.json");
  std::ofstream(dir / "run.json") << "{}";
  const auto loaded = load_corpus(dir);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].path.filename() == "a.json");
  CHECK_THROWS_AS(load_corpus(dir / "nope"), IoError);
}

TEST_CASE("generator state round trips") {
  Rng a(99);
  a.normal();
  Rng b(0);
  b.set_state(a.state());
  for (int i = 0; i < 5; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK_THROWS(b.set_state("not a state"));
}

}
