#include <doctest.h>

#include <algorithm>
#include <set>

#include "promptrl/dialogue.hpp"
#include "promptrl/errors.hpp"
#include "promptrl/mock_provider.hpp"
#include "promptrl/util.hpp"
#include "test_util.hpp"

using namespace promptrl;
using promptrl::testing::CountingProvider;
using promptrl::testing::TempDir;

TEST_CASE("initial message carries the count and both rendered seeds") {
  TaskSpec task = task_preset("sst-2");
  const LabeledExample a{"a gem of a film", "", 1, false};
  const LabeledExample b{"a joyless exercise", "", 0, false};
  const auto messages = build_initial_message(a, b, task);
  REQUIRE(messages.size() == 1);
  CHECK(messages[0].role == Role::kUser);
  CHECK(messages[0].content.rfind("As a movie enthusiast, please generate 20 similar samples",
                                  0) == 0);
  CHECK(messages[0].content.find("Reviews:a gem of a film Sentiment:positive") !=
        std::string::npos);
  CHECK(messages[0].content.find("Reviews:a joyless exercise Sentiment:negative") !=
        std::string::npos);

  task.generations_per_round = 3;
  const auto small = build_initial_message(a, b, task);
  CHECK(small[0].content.find("generate 3 similar samples") != std::string::npos);

  const TaskSpec cr = task_preset("cr");
  CHECK(build_initial_message(a, b, cr)[0].content.rfind("As a customer", 0) == 0);
}

TEST_CASE("rewrite message embeds the seed verbatim in parentheses") {
  const TaskSpec task = task_preset("sst-2");
  const LabeledExample seed{"simply wonderful", "", 1, false};
  const ChatMessage msg = build_rewrite_message(seed, task);
  CHECK(msg.role == Role::kUser);
  CHECK(msg.content.find("imitate the example in parentheses") != std::string::npos);
  CHECK(msg.content.find("(Reviews:simply wonderful Sentiment:positive)") != std::string::npos);

  // Two different seeds produce messages differing only in the parenthesized span.
  const ChatMessage other = build_rewrite_message({"truly bleak", "", 0, false}, task);
  std::string normalized_a = msg.content;
  std::string normalized_b = other.content;
  replace_all(normalized_a, "(Reviews:simply wonderful Sentiment:positive)", "(X)");
  replace_all(normalized_b, "(Reviews:truly bleak Sentiment:negative)", "(X)");
  CHECK(normalized_a == normalized_b);
}

TEST_CASE("parse_generation splits numbered items into text and label") {
  const TaskSpec task = task_preset("sst-2");
  const std::string text =
      "1. Review: good stuff. Sentiment: positive.\n"
      "2. Review: awful. Sentiment: negative.";
  const auto parsed = parse_generation(text, task, 2);
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[0].text == "good stuff.");
  CHECK(parsed[0].label == 1);
  CHECK(parsed[0].pseudo);
  CHECK(parsed[1].text == "awful.");
  CHECK(parsed[1].label == 0);
}

TEST_CASE("parse_generation drops unmappable labels and handles empty text") {
  const TaskSpec task = task_preset("sst-2");
  CHECK(parse_generation("", task, 5).empty());
  const auto parsed = parse_generation(
      "1. Review: fine. Sentiment: neutral.\n2. Review: nice. Sentiment: Positive\n", task, 5);
  REQUIRE(parsed.size() == 1);  // neutral is not in the verbalizer
  CHECK(parsed[0].label == 1);
  CHECK(parsed[0].text == "nice.");
}

TEST_CASE("parse_generation never crashes on arbitrary generator output") {
  const TaskSpec single = task_preset("sst-2");
  const TaskSpec pair = task_preset("rte");
  std::mt19937_64 rng(13);
  const char* bits[] = {"1.", "2)", "Review:", "Sentiment:", "positive", "negative", "Clearly",
                        "I believe", "\n", ":", ".", "(", ")", "12345", "word", "[MASK]", "<S>"};
  for (int trial = 0; trial < 300; ++trial) {
    std::string text;
    const size_t pieces = bounded_rand(rng, 30);
    for (size_t i = 0; i < pieces; ++i) {
      text += bits[bounded_rand(rng, sizeof(bits) / sizeof(bits[0]))];
      if (bounded_rand(rng, 2)) text += " ";
    }
    const auto a = parse_generation(text, single, 5);
    CHECK(a.size() <= 5);
    for (const auto& ex : a) CHECK_FALSE(ex.text.empty());
    const auto b = parse_generation(text, pair, 5);
    CHECK(b.size() <= 5);
    for (const auto& ex : b) {
      CHECK_FALSE(ex.text.empty());
      CHECK_FALSE(ex.text2.empty());
    }
  }
}

TEST_CASE("parse_generation caps at n items") {
  const TaskSpec task = task_preset("sst-2");
  std::string text;
  for (int i = 1; i <= 6; ++i) {
    text += std::to_string(i) + ". Reviews:item " + std::to_string(i) + " Sentiment:positive.\n";
  }
  CHECK(parse_generation(text, task, 4).size() == 4);
}

TEST_CASE("parse_generation splits pair items around the verbalizer token") {
  const TaskSpec task = task_preset("rte");
  const std::string text =
      "1. Cats chase mice every night. Clearly, I believe cats are hunters.\n"
      "2. The sun rose late today. Yet, I believe mornings start earlier.";
  const auto parsed = parse_generation(text, task, 2);
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[0].text == "Cats chase mice every night");
  CHECK(parsed[0].text2 == "cats are hunters");
  CHECK(parsed[0].label == 0);
  CHECK(parsed[1].label == 1);
  CHECK(parsed[1].text2 == "mornings start earlier");
}

TEST_CASE("dialogue round retains history and returns the final batch") {
  const TaskSpec task = promptrl::testing::small_task(/*m=*/4, /*n=*/3, /*rounds=*/1, /*h=*/3);
  MockProvider mock(3, 8, task);
  CountingProvider counting(mock);
  const auto train = promptrl::testing::small_train_set();
  const std::vector<LabeledExample> seeds(train.begin(), train.begin() + 4);

  const RoundResult round = run_dialogue_round(counting, seeds, task, 0);
  CHECK(counting.chat_calls == 3);  // 1 initial + (m-2) rewrites
  CHECK(round.prompts.size() == 3);
  CHECK(round.transcript.batches.size() == 3);
  // user/assistant alternation over the full history
  REQUIRE(round.transcript.messages.size() == 6);
  for (size_t i = 0; i < round.transcript.messages.size(); ++i) {
    CHECK(round.transcript.messages[i].role == (i % 2 == 0 ? Role::kUser : Role::kAssistant));
  }
  for (const auto& p : round.prompts) {
    CHECK(p.source == PromptSource::kDialogueGenerated);
    CHECK_FALSE(p.rendered_text.empty());
  }
}

TEST_CASE("scripted transcript: the final batch equals the scripted last output") {
  const TaskSpec task = promptrl::testing::small_task(/*m=*/3, /*n=*/2, /*rounds=*/1, /*h=*/2);
  MockProvider mock(3, 8, task);
  mock.script_chat_reply("1. Reviews:first try Sentiment:positive.\n"
                         "2. Reviews:second try Sentiment:negative.");
  mock.script_chat_reply("1. Reviews:final alpha Sentiment:negative.\n"
                         "2. Reviews:final beta Sentiment:positive.");
  const auto train = promptrl::testing::small_train_set();
  const std::vector<LabeledExample> seeds(train.begin(), train.begin() + 3);
  const RoundResult round = run_dialogue_round(mock, seeds, task, 0);
  REQUIRE(round.prompts.size() == 2);
  CHECK(round.prompts[0].rendered_text == "Reviews:final alpha Sentiment:negative");
  CHECK(round.prompts[1].rendered_text == "Reviews:final beta Sentiment:positive");
}

TEST_CASE("short batches are re-asked once and then accepted") {
  const TaskSpec task = promptrl::testing::small_task(/*m=*/3, /*n=*/3, /*rounds=*/1, /*h=*/3);
  MockProvider mock(3, 8, task);
  CountingProvider counting(mock);
  // Initial generation parses only one item; the re-ask still falls short, and
  // the round accepts it. The rewrite step then behaves.
  mock.script_chat_reply("1. Reviews:only one Sentiment:positive.");
  mock.script_chat_reply("1. Reviews:still one Sentiment:positive.");
  mock.script_chat_reply("1. Reviews:a Sentiment:positive.\n2. Reviews:b Sentiment:negative.\n"
                         "3. Reviews:c Sentiment:positive.");
  const auto train = promptrl::testing::small_train_set();
  const std::vector<LabeledExample> seeds(train.begin(), train.begin() + 3);
  const RoundResult round = run_dialogue_round(counting, seeds, task, 0);
  CHECK(counting.chat_calls == 3);  // initial + re-ask + rewrite
  CHECK(round.prompts.size() == 3);
}

TEST_CASE("seed selection returns the top-m examples in rank order") {
  const TaskSpec task = promptrl::testing::small_task(/*m=*/4, /*n=*/3, /*rounds=*/1, /*h=*/3);
  MockProvider mock(19, 8, task);
  const auto train = promptrl::testing::small_train_set();

  const SeedSelection selection = select_seed_set(mock, train, task);
  REQUIRE(selection.examples.size() == 4);
  REQUIRE(selection.ranked_train.size() == train.size());
  for (size_t i = 0; i < 4; ++i) {
    CHECK(render_prompt(selection.examples[i], task).rendered_text ==
          selection.ranked_train[i].prompt.rendered_text);
  }
  CHECK(std::is_sorted(selection.ranked_train.begin(), selection.ranked_train.end(),
                       [](const auto& a, const auto& b) {
                         return a.breakdown.sue > b.breakdown.sue;
                       }));

  // m equal to the training size keeps everything, SUE-ordered.
  TaskSpec all = task;
  all.seed_set_size = static_cast<int>(train.size());
  CHECK(select_seed_set(mock, train, all).examples.size() == train.size());

  TaskSpec too_big = task;
  too_big.seed_set_size = static_cast<int>(train.size()) + 1;
  CHECK_THROWS_AS(select_seed_set(mock, train, too_big), ConfigError);

  // Deterministic across repeated runs with the same provider seed.
  MockProvider mock2(19, 8, task);
  const SeedSelection again = select_seed_set(mock2, train, task);
  for (size_t i = 0; i < 4; ++i) CHECK(again.examples[i].text == selection.examples[i].text);
}

TEST_CASE("construct_prompt_set structure: counts, ordering, artifacts") {
  const TaskSpec task = promptrl::testing::small_task(/*m=*/4, /*n=*/3, /*rounds=*/2, /*h=*/4);
  MockProvider mock(51, 8, task);
  CountingProvider counting(mock);
  const auto train = promptrl::testing::small_train_set();

  TempDir dir;
  ConstructOptions options;
  options.seed = 7;
  options.artifact_dir = dir.path();

  const ConstructionResult result = construct_prompt_set(counting, train, task, options);
  CHECK(counting.chat_calls == 2 * (4 - 1));  // round_max * (m - 1)
  CHECK(result.pool.size() == 3 * 2);         // n * round_max
  REQUIRE(result.prompts.size() == 4);        // h
  CHECK(std::is_sorted(result.prompts.begin(), result.prompts.end(),
                       [](const Prompt& a, const Prompt& b) {
                         return a.sue_score > b.sue_score;
                       }));

  // Every seed is fed into the dialogue exactly once per round.
  const SeedSelection seeds = select_seed_set(mock, train, task);
  for (const auto& transcript : result.transcripts) {
    std::string all_user_text;
    for (const auto& m : transcript.messages) {
      if (m.role == Role::kUser) all_user_text += m.content + "\n";
    }
    for (const auto& seed : seeds.examples) {
      CHECK(count_occurrences(all_user_text, render_prompt(seed, task).rendered_text) == 1);
    }
  }

  // Output SUE scores match an independent re-scoring pass bit-for-bit.
  for (const auto& prompt : result.prompts) {
    const SueBreakdown again = sue_score(mock, prompt, train, task);
    CHECK(*prompt.sue_score == again.sue);
  }

  CHECK(std::filesystem::exists(dir.path() / "prompt_set.json"));
  CHECK(std::filesystem::exists(dir.path() / "sue_report.json"));
  CHECK(std::filesystem::exists(dir.path() / "transcripts" / "round_0.json"));
  CHECK(std::filesystem::exists(dir.path() / "transcripts" / "round_1.json"));
  const auto reloaded = load_prompt_set(dir.path() / "prompt_set.json");
  REQUIRE(reloaded.size() == result.prompts.size());
  for (size_t i = 0; i < reloaded.size(); ++i) {
    CHECK(reloaded[i].rendered_text == result.prompts[i].rendered_text);
  }
}

TEST_CASE("construct_prompt_set is deterministic for a fixed seed") {
  const TaskSpec task = promptrl::testing::small_task(/*m=*/4, /*n=*/3, /*rounds=*/2, /*h=*/4);
  const auto train = promptrl::testing::small_train_set();

  TempDir dir_a;
  TempDir dir_b;
  ConstructOptions options;
  options.seed = 99;
  {
    MockProvider mock(13, 8, task);
    options.artifact_dir = dir_a.path();
    construct_prompt_set(mock, train, task, options);
  }
  {
    MockProvider mock(13, 8, task);
    options.artifact_dir = dir_b.path();
    construct_prompt_set(mock, train, task, options);
  }
  CHECK(promptrl::testing::slurp(dir_a.path() / "prompt_set.json") ==
        promptrl::testing::slurp(dir_b.path() / "prompt_set.json"));
}

TEST_CASE("round_max=1 with h=n makes ranking the only transformation") {
  const TaskSpec task = promptrl::testing::small_task(/*m=*/4, /*n=*/4, /*rounds=*/1, /*h=*/4);
  MockProvider mock(61, 8, task);
  const auto train = promptrl::testing::small_train_set();
  ConstructOptions options;
  options.seed = 1;
  const ConstructionResult result = construct_prompt_set(mock, train, task, options);
  CHECK(result.pool.size() == 4);
  REQUIRE(result.prompts.size() == 4);
  std::multiset<std::string> pool_texts;
  std::multiset<std::string> out_texts;
  for (const auto& e : result.pool) pool_texts.insert(e.prompt.rendered_text);
  for (const auto& p : result.prompts) out_texts.insert(p.rendered_text);
  CHECK(pool_texts == out_texts);
}

TEST_CASE("provider failure aborts the pipeline with the completed-round count") {
  const TaskSpec task = promptrl::testing::small_task(/*m=*/4, /*n=*/3, /*rounds=*/3, /*h=*/4);
  const auto train = promptrl::testing::small_train_set();

  class FailingChat : public MockProvider {
   public:
    using MockProvider::MockProvider;
    int budget = 0;

   protected:
    std::string chat_impl(const std::vector<ChatMessage>& messages) override {
      if (budget-- <= 0) throw ProviderError("generator down");
      return MockProvider::chat_impl(messages);
    }
  };

  FailingChat provider(71, 8, task);
  provider.budget = 4;  // round 0 completes (3 calls), round 1 fails mid-way
  ConstructOptions options;
  options.seed = 2;
  try {
    construct_prompt_set(provider, train, task, options);
    FAIL("expected PipelineError");
  } catch (const PipelineError& e) {
    CHECK(e.rounds_completed == 1);
  }
}
