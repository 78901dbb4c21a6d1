#include <gtest/gtest.h>

#include <random>

#include "support.hpp"
#include "taskprompt/error.hpp"
#include "taskprompt/text.hpp"

using namespace taskprompt;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected taskprompt::Error";
  return ErrorCode::Io;
}

}  // namespace

TEST(LoadScene, ReadsCanRowWithFeaturesInOrder) {
  auto scene = load_scene(
      "task: tidy conference room\nagent: conference room\n"
      "object: can @ conference room ; contents = empty ; material = metal ; property = soda");
  EXPECT_EQ(scene.task_phrase, "tidy conference room");
  EXPECT_EQ(scene.agent_location, "conference room");
  ASSERT_EQ(scene.objects.size(), 1u);
  const auto& can = scene.objects[0];
  EXPECT_EQ(can.name, "can");
  EXPECT_EQ(can.location, "conference room");
  ASSERT_EQ(can.features.size(), 3u);
  EXPECT_EQ(can.features[0], (Feature{"contents", "empty"}));
  EXPECT_EQ(can.features[1], (Feature{"material", "metal"}));
  EXPECT_EQ(can.features[2], (Feature{"property", "soda"}));
}

TEST(LoadScene, TaskOnlyIsMissingAgent) {
  EXPECT_EQ(code_of([] { load_scene("task: tidy conference room\n"); }), ErrorCode::MissingAgentLocation);
}

TEST(LoadScene, MissingTask) {
  EXPECT_EQ(code_of([] { load_scene("agent: kitchen\nobject: mug @ sink\n"); }), ErrorCode::MissingTask);
}

TEST(LoadScene, DuplicateAttributeCarriesObjectIndex) {
  try {
    load_scene("task: t\nagent: a\nobject: bottle @ conference room ; material = plastic ; material = glass");
    FAIL() << "expected DuplicateAttribute";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DuplicateAttribute);
    ASSERT_TRUE(e.index.has_value());
    EXPECT_EQ(*e.index, 0u);
  }
}

TEST(LoadScene, MalformedLineReportsLineNumber) {
  try {
    load_scene("task: t\n# comment\nagent: a\nobject can @ table\n");
    FAIL() << "expected MalformedLine";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedLine);
    ASSERT_TRUE(e.line.has_value());
    EXPECT_EQ(*e.line, 4u);
  }
  EXPECT_EQ(code_of([] { load_scene("task: t\nagent: a\nobject: can\n"); }), ErrorCode::MalformedLine);
  EXPECT_EQ(code_of([] { load_scene("task: t\nagent: a\nobject: can @ table ; material\n"); }),
            ErrorCode::MalformedLine);
}

TEST(LoadScene, AcceptsLooseWhitespace) {
  auto scene = load_scene("task:   tidy  kitchen\nagent: kitchen\nobject:  mug@sink;material=ceramic\n");
  EXPECT_EQ(scene.objects.at(0).name, "mug");
  EXPECT_EQ(scene.objects.at(0).location, "sink");
  EXPECT_EQ(scene.objects.at(0).features.at(0), (Feature{"material", "ceramic"}));
}

TEST(LoadScene, ShippedConferenceRoomKeepsBothCups) {
  auto scene = testing_support::conference_room();
  // Independent count: object lines in the file itself.
  auto raw = text::read_file(testing_support::data_path("scenes/conference_room.scene"));
  std::size_t lines = 0;
  for (const auto& l : text::split(raw, '\n'))
    if (l.rfind("object:", 0) == 0) ++lines;
  EXPECT_EQ(scene.objects.size(), lines);
  EXPECT_EQ(scene.objects.size(), 9u);
  EXPECT_EQ(scene.objects[2].name, "cup");
  EXPECT_EQ(scene.objects[3].name, "cup");
  EXPECT_NE(scene.objects[2], scene.objects[3]);
}

TEST(SelectContext, PartialIsAgentPlusTarget) {
  auto scene = testing_support::conference_room();
  auto view = select_context(scene, 0, ContextScope::Partial);
  EXPECT_EQ(view.agent_location, "conference room");
  ASSERT_EQ(view.objects.size(), 1u);
  EXPECT_EQ(view.objects[0]->name, "can");
}

TEST(SelectContext, NoneIsEmpty) {
  auto scene = testing_support::kitchen();
  EXPECT_TRUE(select_context(scene, 3, ContextScope::None).empty());
}

TEST(SelectContext, FullPutsTargetFirst) {
  auto scene = testing_support::conference_room();
  auto view = select_context(scene, 1, ContextScope::Full);
  ASSERT_EQ(view.objects.size(), 9u);
  EXPECT_EQ(view.objects[0]->name, "bottle");
  EXPECT_EQ(view.objects[1]->name, "can");
  EXPECT_EQ(view.objects[2], &scene.objects[2]);
}

TEST(SelectContext, IndexOutOfRange) {
  auto scene = testing_support::conference_room();
  EXPECT_EQ(code_of([&] { select_context(scene, 9, ContextScope::Partial); }), ErrorCode::IndexOutOfRange);
}

// Random scenes survive serialize -> load unchanged, and context views have
// the sizes their scope promises.
TEST(SceneProperty, RoundTripAndContextSizes) {
  std::mt19937 rng(20240611);
  const std::vector<std::string> words{"can", "paper cup", "mug", "recycling bin", "glass", "desk lamp", "box"};
  const std::vector<std::string> places{"table", "conference room", "sink", "storage room"};
  const std::vector<std::string> attrs{"material", "contents", "property", "color", "size"};
  const std::vector<std::string> values{"metal", "empty", "soda", "red", "large", "paper"};
  auto pick = [&](const std::vector<std::string>& v) { return v[rng() % v.size()]; };

  for (int trial = 0; trial < 500; ++trial) {
    Scene s;
    s.task_phrase = "tidy " + pick(places);
    s.agent_location = pick(places);
    const std::size_t n = 1 + rng() % 8;
    for (std::size_t i = 0; i < n; ++i) {
      ObjectDescriptor o{pick(words), pick(places), {}};
      auto pool = attrs;
      std::shuffle(pool.begin(), pool.end(), rng);
      const std::size_t k = rng() % 4;
      for (std::size_t j = 0; j < k; ++j) o.features.push_back({pool[j], pick(values)});
      s.objects.push_back(o);
    }
    auto text = serialize_scene(s);
    ASSERT_EQ(load_scene(text), s) << text;
    const std::size_t target = rng() % n;
    EXPECT_EQ(select_context(s, target, ContextScope::Partial).objects.size(), 1u);
    auto full = select_context(s, target, ContextScope::Full);
    ASSERT_EQ(full.objects.size(), n);
    EXPECT_EQ(full.objects[0], &s.objects[target]);
  }
}
