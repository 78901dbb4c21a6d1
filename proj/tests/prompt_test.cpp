#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <regex>

#include "support.hpp"
#include "taskprompt/error.hpp"
#include "taskprompt/text.hpp"

using namespace taskprompt;
using testing_support::conference_room;
using testing_support::library;

namespace {

// Reference can prompt, assembled line by line.
std::string reference_can_prompt() {
  return std::string("(EXAMPLES) (TASK) Goal: Deliver object. Task context: I am in mailroom. ") +
         "Aware of package addressed to Gary, package is in mailroom. Steps: \n" +
         "1. Pick up package addressed to Gary \n" +
         "2. Go to Gary's office \n" +
         "3. Put package onto desk in Gary's office (END TASK)\n" +
         "\n(END EXAMPLES) \n" +
         "(TASK) Goal: tidy conference room. Task context: I am in conference room. " +
         "Aware of can, can contents is empty, can material is metal, can property is soda, " +
         "can is in conference room. Steps: 1. ";
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void check_golden(const std::string& name, const std::string& actual) {
  const auto path = testing_support::golden_path(name);
  if (std::getenv("TASKPROMPT_UPDATE_GOLDEN")) text::write_file(path, actual);
  std::ifstream in(path, std::ios::binary);
  ASSERT_TRUE(in) << "missing golden file " << path;
  EXPECT_EQ(text::read_file(path), actual) << "golden mismatch: " << path;
}

}  // namespace

TEST(RenderPrompt, CanPromptBitExact) {
  auto p = render_prompt(conference_room(), 0, PromptConfig{}, library());
  EXPECT_EQ(p.text, reference_can_prompt());
  EXPECT_EQ(p.stop_sequences, std::vector<std::string>{"(END TASK)"});
  EXPECT_EQ(p.slots.object, "can");
  EXPECT_EQ(p.slots.agent_location, "conference room");
  EXPECT_EQ(p.slots.object_location, "conference room");
  EXPECT_EQ(p.slots.feature_clauses.size(), 4u);
}

TEST(RenderPrompt, DegenerateConfiguration) {
  PromptConfig c;
  c.n_examples = 0;
  c.context_scope = ContextScope::None;
  c.feature_scope = FeatureScope::NameOnly;
  EXPECT_EQ(render_prompt(conference_room(), 0, c, library()).text, "(TASK) Goal: tidy conference room. Steps: 1. ");
}

TEST(RenderPrompt, PredicatePartialTask) {
  PromptConfig c;
  c.style = Style::Predicate;
  auto text = render_prompt(conference_room(), 0, c, library()).text;
  const std::string expected =
      "(TASK) Tidy(conference room). Observe(can). Located-on(can, conference room). Contents(can, empty). "
      "Material(can, metal). Property(can, soda). Steps:";
  EXPECT_TRUE(ends_with(text, "\n(END EXAMPLES) \n" + expected)) << text;
}

TEST(RenderPrompt, ColloquialFillsTemplateSlots) {
  PromptConfig c;
  c.style = Style::Colloquial;
  auto text = render_prompt(conference_room(), 0, c, library()).text;
  EXPECT_NE(text.find("I see an empty metal soda can in conference room. "
                      "What are steps to tidy conference room with can in it? Steps: 1. "),
            std::string::npos)
      << text;
  // Article follows the first word of the phrase.
  auto table = render_prompt(conference_room(), 5, c, library()).text;
  EXPECT_NE(table.find("I see a table in conference room."), std::string::npos);
  auto glass = render_prompt(conference_room(), 3, c, library()).text;
  EXPECT_NE(glass.find("I see a glass cup in conference room."), std::string::npos);
}

TEST(RenderPrompt, FullContextBlockPrecedesPartialTask) {
  PromptConfig c;
  c.context_scope = ContextScope::Full;
  auto text = render_prompt(conference_room(), 0, c, library()).text;
  auto ctx = text.find("(CONTEXT) Aware of bottle, bottle contents is full,");
  auto end = text.find("(END CONTEXT) \n(TASK) Goal: tidy conference room.");
  ASSERT_NE(ctx, std::string::npos) << text;
  ASSERT_NE(end, std::string::npos) << text;
  EXPECT_LT(ctx, end);
  auto block = text.substr(ctx, end - ctx);
  EXPECT_EQ(block.find("Aware of can"), std::string::npos);
  EXPECT_NE(block.find("Aware of waste bin, waste bin is in conference room."), std::string::npos);
}

TEST(RenderPrompt, Errors) {
  PromptConfig c;
  c.n_examples = 4;
  try {
    render_prompt(conference_room(), 0, c, library());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotEnoughExamples);
  }
  try {
    render_prompt(conference_room(), 42, PromptConfig{}, library());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IndexOutOfRange);
  }
}

TEST(FeatureClauses, CanTerseFull) {
  auto can = conference_room().objects[0];
  EXPECT_EQ(render_feature_clauses(can, Style::Terse, FeatureScope::Full),
            (std::vector<std::string>{"can contents is empty", "can material is metal", "can property is soda",
                                      "can is in conference room"}));
}

TEST(FeatureClauses, ObjectWithoutFeatures) {
  auto table = conference_room().objects[5];
  EXPECT_EQ(render_feature_clauses(table, Style::Terse, FeatureScope::Full),
            std::vector<std::string>{"table is in conference room"});
}

TEST(FeatureClauses, NameOnlyKeepsLocation) {
  auto can = conference_room().objects[0];
  EXPECT_EQ(render_feature_clauses(can, Style::Terse, FeatureScope::NameOnly),
            std::vector<std::string>{"can is in conference room"});
  EXPECT_EQ(render_feature_clauses(can, Style::Predicate, FeatureScope::NameOnly),
            std::vector<std::string>{"Located-on(can, conference room)"});
}

TEST(GoalPrompt, ResultBlocksAndOpenResult) {
  PromptConfig c;
  auto p = render_goal_eliciting_prompt(conference_room(), 1, c, library());
  EXPECT_NE(p.text.find("Steps: (RESULT) The goal is that the package is on the desk in Gary's office (END RESULT) \n"
                        "1. Pick up package"),
            std::string::npos)
      << p.text;
  EXPECT_TRUE(ends_with(p.text, "bottle is in conference room. Steps: (RESULT) ")) << p.text;
  EXPECT_EQ(p.stop_sequences, (std::vector<std::string>{"(END RESULT)", "(END TASK)"}));
}

TEST(GoalPrompt, ExampleWithoutResult) {
  auto lib = library();
  lib[1].result_clause.reset();
  PromptConfig c;
  c.n_examples = 2;
  try {
    render_goal_eliciting_prompt(conference_room(), 0, c, lib);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ExampleMissingResult);
    EXPECT_EQ(e.index.value_or(99), 1u);
  }
  // Unused examples are not checked.
  c.n_examples = 1;
  EXPECT_NO_THROW(render_goal_eliciting_prompt(conference_room(), 0, c, lib));
}

TEST(GoalPrompt, FlagOffIsIdentity) {
  PromptConfig c;
  c.elicit_goal = false;
  EXPECT_EQ(render_prompt(conference_room(), 4, c, library()).text,
            render_prompt(conference_room(), 4, PromptConfig{}, library()).text);
}

TEST(ExampleLibrary, ShipsThreeNamedExamples) {
  auto lib = library();
  ASSERT_EQ(lib.size(), 3u);
  EXPECT_EQ(lib[0].name, "deliver-package");
  EXPECT_EQ(lib[1].name, "store-package");
  EXPECT_EQ(lib[2].name, "fetch-printout");
  for (const auto& ex : lib) {
    EXPECT_FALSE(ex.steps.empty());
    for (const auto& s : ex.steps) EXPECT_FALSE(std::regex_search(s, std::regex(R"(^\d+\.)")));
  }
}

TEST(AppendSteps, OpensNextNumber) {
  auto p = testing_support::can_prompt().text;
  EXPECT_EQ(append_steps(p, {}), p);
  EXPECT_EQ(append_steps(p, {"Pick up can"}), p + "Pick up can\n2. ");
  EXPECT_EQ(append_steps(p, {"Pick up can", "Take can to kitchen"}), p + "Pick up can\n2. Take can to kitchen\n3. ");
}

TEST(StyleCoverage, EveryObjectEveryStyle) {
  auto scene = conference_room();
  for (auto style : {Style::Terse, Style::Colloquial, Style::Predicate})
    for (auto features : {FeatureScope::NameOnly, FeatureScope::Full})
      for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        PromptConfig c;
        c.style = style;
        c.feature_scope = features;
        auto p = render_prompt(scene, i, c, library());
        EXPECT_NE(p.text.find(scene.objects[i].name), std::string::npos);
      }
}

TEST(StyleCoverage, ColloquialGolden) {
  check_golden("conference_room.colloquial.txt", testing_support::render_all_objects(Style::Colloquial));
}
TEST(StyleCoverage, PredicateGolden) {
  check_golden("conference_room.predicate.txt", testing_support::render_all_objects(Style::Predicate));
}

// For every axis combination: determinism, delimiter pairing, example-count
// monotonicity and delimiter removal.
TEST(PromptProperty, AxisSweepInvariants) {
  auto scene = conference_room();
  auto lib = library();
  const std::regex opener(R"(\(([A-Z]+)\))");
  for (auto style : {Style::Terse, Style::Colloquial, Style::Predicate})
    for (auto ctx : {ContextScope::None, ContextScope::Partial, ContextScope::Full})
      for (auto feat : {FeatureScope::NameOnly, FeatureScope::Full})
        for (bool goal : {false, true})
          for (std::size_t target = 0; target < scene.objects.size(); ++target) {
            std::vector<std::string> texts;
            std::string suffix;
            for (std::size_t k = 0; k <= 3; ++k) {
              PromptConfig c{style, true, k, ctx, feat, goal};
              auto text = render_prompt(scene, target, c, lib).text;
              ASSERT_EQ(text, render_prompt(scene, target, c, lib).text);

              // Every opener has a matching closer, except the final (TASK) and a
              // trailing (RESULT) that asks for the goal.
              std::map<std::string, int> open;
              for (std::sregex_iterator it(text.begin(), text.end(), opener), end; it != end; ++it) {
                auto tag = (*it)[1].str();
                if (tag.rfind("END", 0) == 0) continue;
                ++open[tag];
              }
              std::size_t last_task = text.rfind("(TASK)");
              for (const auto& [tag, count] : open) {
                std::size_t closes = 0;
                for (auto pos = text.find("(END " + tag + ")"); pos != std::string::npos;
                     pos = text.find("(END " + tag + ")", pos + 1))
                  ++closes;
                const int trailing = (tag == "TASK" || (tag == "RESULT" && ends_with(text, "(RESULT) "))) ? 1 : 0;
                EXPECT_EQ(static_cast<int>(closes) + trailing, count) << tag << "\n" << text;
              }
              EXPECT_EQ(text.find("(END TASK)", last_task), std::string::npos);

              PromptConfig bare = c;
              bare.delimiters = false;
              auto plain = render_prompt(scene, target, bare, lib).text;
              for (const char* d : {"(TASK)", "(END TASK)", "(EXAMPLES)", "(END EXAMPLES)"})
                EXPECT_EQ(plain.find(d), std::string::npos);
              if (style == Style::Terse) {
                EXPECT_NE(plain.find("Goal:"), std::string::npos);
                EXPECT_NE(plain.find("Steps:"), std::string::npos);
                if (ctx != ContextScope::None) EXPECT_NE(plain.find("Task context:"), std::string::npos);
              }

              auto tail = text.substr(text.rfind("(TASK)"));
              if (k == 0) {
                suffix = tail;
              } else {
                EXPECT_EQ(tail, suffix);
              }
              texts.push_back(text);
            }
            // Example blocks grow by appending whole TASK blocks.
            const std::string closing = "\n(END EXAMPLES) \n";
            auto examples_of = [&](const std::string& t) {
              auto body = t.substr(0, t.size() - suffix.size());
              auto ctx_at = body.find("(CONTEXT)");
              if (ctx_at != std::string::npos) body.resize(ctx_at);
              if (body.size() >= closing.size()) body.resize(body.size() - closing.size());
              return body;
            };
            for (std::size_t k = 1; k + 1 < texts.size(); ++k) {
              auto a = examples_of(texts[k]);
              auto b = examples_of(texts[k + 1]);
              EXPECT_EQ(b.compare(0, a.size(), a), 0);
            }
          }
}
