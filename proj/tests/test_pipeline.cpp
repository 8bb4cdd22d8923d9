#include <doctest.h>

#include "r2p/mock_backend.hpp"
#include "r2p/pipeline.hpp"
#include "r2p/util.hpp"
#include "test_support.hpp"

using namespace r2p;
using test_support::data_path;

namespace {

const char* kCleanReply = "<think>User Profile Integration: the history sets the bar.</think>\n3";

TaskInstance lamp3_instance() {
    Dataset d = load_dataset(data_path("lamp3_toy.jsonl"), TaskId::LaMP_3);
    return d.instances[0];
}

PipelineConfig r2p_config(std::size_t k, std::size_t n) {
    PipelineConfig c = PipelineConfig::for_strategy(Strategy::R2p);
    c.k = k;
    c.n = n;
    c.seed = 42;
    return c;
}

ModelProfile mock_model() { return ModelProfile::make("mock-model", true); }

ContextSelection top1_selection(const TaskInstance& inst) {
    return select_context(inst.profile, inst.input_text, ContextStrategy::Bm25, 1);
}

ReasoningOutput output_of(std::string trace, std::string final_answer) {
    ReasoningOutput out;
    out.trace = std::move(trace);
    out.final_answer = std::move(final_answer);
    return out;
}

}  // namespace

TEST_CASE("derive_checklist order per task and k") {
    auto ids = [](const std::vector<ChecklistItem>& items) {
        std::vector<std::string> out;
        for (const auto& i : items) out.push_back(i.item_id);
        return out;
    };
    CHECK(ids(derive_checklist(TaskKind::get(TaskId::LaMP_3), 4)) ==
          std::vector<std::string>{"nonempty_final", "format_valid", "profile_referenced"});
    CHECK(ids(derive_checklist(TaskKind::get(TaskId::LaMP_4), 0)) ==
          std::vector<std::string>{"nonempty_final", "format_valid"});
    CHECK(ids(derive_checklist(TaskKind::get(TaskId::LaMP_2M), 1)) ==
          std::vector<std::string>{"nonempty_final", "format_valid", "answer_in_label_set",
                                   "profile_referenced"});
}

TEST_CASE("verify detectors against a hand-labeled table") {
    TaskInstance inst = lamp3_instance();
    const TaskKind& task = TaskKind::get(TaskId::LaMP_3);
    ContextSelection sel = top1_selection(inst);
    REQUIRE(sel.chosen[0].first == "p3");  // "Decent kettle for the price, heats water quickly."
    ContextSelection none;

    struct Case {
        std::string trace;
        std::string final;
        bool with_context;
        std::vector<bool> expected;  // verdicts in checklist order
        std::string first_failure;   // empty = all pass
    };
    // Hand-evaluated: nonempty_final, format_valid, then profile_referenced
    // when context is present.
    const std::vector<Case> cases = {
        {"", "3", false, {true, true}, ""},
        {"", "", false, {false, false}, "nonempty_final"},
        {"", "maybe 4?", false, {true, false}, "format_valid"},
        {"User Profile Integration considered.", "4", true, {true, true, true}, ""},
        {"hmm", "4", true, {true, true, false}, "profile_referenced"},
        {"the user said decent kettle for the price", "2", true, {true, true, true}, ""},
        {"", "heats water quickly", true, {true, false, true}, "format_valid"},
        {"kettle price water", "5", true, {true, true, false}, "profile_referenced"},
        {"Retrieval Augmented Generation step done", "1", true, {true, true, true}, ""},
        {"", "6", true, {true, false, false}, "format_valid"},
    };
    for (std::size_t i = 0; i < cases.size(); ++i) {
        CAPTURE(i);
        const Case& c = cases[i];
        ChecklistReport report =
            verify(task, output_of(c.trace, c.final), c.with_context ? sel : none, inst.profile);
        REQUIRE(report.verdicts.size() == c.expected.size());
        for (std::size_t v = 0; v < c.expected.size(); ++v) {
            CAPTURE(v);
            CHECK(report.verdicts[v].second == c.expected[v]);
        }
        if (c.first_failure.empty()) {
            CHECK(report.all_pass());
        } else {
            REQUIRE(report.first_failure.has_value());
            CHECK(*report.first_failure == c.first_failure);
        }
    }
}

TEST_CASE("verify flags a three-token quote from a retrieved entry") {
    TaskInstance inst = lamp3_instance();
    ContextSelection sel = top1_selection(inst);
    ReasoningOutput out = output_of("they say it heats water quickly which matches", "4");
    ChecklistReport report = verify(TaskKind::get(TaskId::LaMP_3), out, sel, inst.profile);
    CHECK(report.all_pass());
}

TEST_CASE("label membership detector is case-insensitive") {
    const TaskKind& task = TaskKind::get(TaskId::LaMP_2M);
    ContextSelection none;
    ChecklistReport ok = verify(task, output_of("", "Sci-Fi"), none, {});
    CHECK(ok.all_pass());
    ChecklistReport bad = verify(task, output_of("", "space opera"), none, {});
    REQUIRE(bad.first_failure.has_value());
    CHECK(*bad.first_failure == "format_valid");
}

TEST_CASE("intervention sentences name the failing requirement") {
    CHECK(intervention_sentence(Detector::ProfileReferenced, TaskKind::get(TaskId::LaMP_3)) ==
          "Wait, let me analyze the user profile.");
    std::string lamp1 = intervention_sentence(Detector::FormatValid, TaskKind::get(TaskId::LaMP_1));
    CHECK(lamp1.find("[1]") != std::string::npos);
    CHECK(lamp1.find("[2]") != std::string::npos);
    std::string lamp3 = intervention_sentence(Detector::FormatValid, TaskKind::get(TaskId::LaMP_3));
    CHECK(lamp3.find("integer from 1 to 5") != std::string::npos);
    std::string labels = intervention_sentence(Detector::AnswerInLabelSet, TaskKind::get(TaskId::LaMP_2M));
    CHECK(labels.find("sci-fi") != std::string::npos);
}

TEST_CASE("build_intervention_request extends the conversation") {
    const TaskKind& task = TaskKind::get(TaskId::LaMP_3);
    GenRequest prior;
    prior.messages.messages = {{Role::User, "question"}};
    prior.model_name = "m";
    ChecklistReport report;
    report.verdicts = {{"nonempty_final", true}, {"format_valid", false}};
    report.first_failure = "format_valid";

    GenRequest next = build_intervention_request(prior, "raw output", report, task, 7);
    REQUIRE(next.messages.messages.size() == 3);
    CHECK(next.messages.messages[1].role == Role::Assistant);
    CHECK(next.messages.messages[1].content == "raw output");
    CHECK(next.messages.messages[2].role == Role::User);
    CHECK(next.messages.messages[2].content.find("starting from the flagged step") != std::string::npos);
    CHECK(next.seed == 7);

    ChecklistReport clean;
    CHECK_THROWS_AS(build_intervention_request(prior, "x", clean, task, {}), ValidationError);
}

TEST_CASE("rag strategy issues exactly one call") {
    TaskInstance inst = lamp3_instance();
    PipelineConfig config = PipelineConfig::for_strategy(Strategy::Rag);
    config.k = 1;
    config.seed = 42;
    MockBackend mock = MockBackend::sequence({{"3", 3, {}, {}, false}});

    RunRecord record = run_instance(config, inst, mock, mock_model());
    CHECK(record.calls.size() == 1);
    CHECK(record.final_answer == "3");
    CHECK(record.interventions == 0);
    CHECK(record.total_completion_tokens == 3);
    CHECK(record.selection.chosen.size() == 1);
}

TEST_CASE("self-verification issues draft plus verify") {
    TaskInstance inst = lamp3_instance();
    PipelineConfig config = PipelineConfig::for_strategy(Strategy::SelfVerification);
    config.k = 1;
    config.seed = 42;
    MockBackend mock = MockBackend::sequence({
        {"2", 1, {}, {}, false},
        {"3", 1, {}, std::string("Here is a draft answer: 2"), false},
    });

    RunRecord record = run_instance(config, inst, mock, mock_model());
    CHECK(record.calls.size() == 2);
    CHECK(record.final_answer == "3");
}

TEST_CASE("pag issues summary then answer") {
    TaskInstance inst = lamp3_instance();
    PipelineConfig config = PipelineConfig::for_strategy(Strategy::Pag);
    config.k = 0;
    config.seed = 42;

    SUBCASE("normal summary") {
        MockBackend mock = MockBackend::sequence({
            {"Prefers sturdy kitchen gear.", 4, {}, std::string("Summarize the user's preferences"), false},
            {"2", 1, {}, std::string("Summary of the user's preferences: Prefers sturdy kitchen gear."), false},
        });
        RunRecord record = run_instance(config, inst, mock, mock_model());
        CHECK(record.calls.size() == 2);
        CHECK(record.final_answer == "2");
        CHECK(record.flags.empty());
        // k=0 summarizes the whole profile
        for (const auto& entry : inst.profile) {
            CHECK(record.calls[0].request.messages.messages[0].content.find(
                      entry.fields.at("text")) != std::string::npos);
        }
    }
    SUBCASE("empty summary still answers, flagged") {
        MockBackend mock = MockBackend::sequence({
            {"", 0, {}, {}, false},
            {"3", 1, {}, {}, false},
        });
        RunRecord record = run_instance(config, inst, mock, mock_model());
        CHECK(record.calls.size() == 2);
        CHECK(record.final_answer == "3");
        CHECK(record.flags == std::vector<std::string>{"empty_summary"});
    }
    SUBCASE("empty profile is rejected") {
        TaskInstance bare = inst;
        bare.profile.clear();
        MockBackend mock = MockBackend::sequence({});
        CHECK_THROWS_AS(run_instance(config, bare, mock, mock_model()), ValidationError);
    }
}

TEST_CASE("r2p clean pass makes n+1 calls") {
    TaskInstance inst = lamp3_instance();
    PipelineConfig config = r2p_config(1, 2);
    MockBackend mock = MockBackend::sequence({
        {kCleanReply, 10, {}, {}, false},
        {"<think>User Profile Integration: second look.</think>\n4", 8, {}, {}, false},
        {"3", 1, {}, std::string("Possible answers might be: 3, 4."), false},
    });

    RunRecord record = run_instance(config, inst, mock, mock_model());
    CHECK(record.calls.size() == 3);  // n + 1
    CHECK(record.candidates == std::vector<std::string>{"3", "4"});
    CHECK(record.final_answer == "3");
    CHECK(record.interventions == 0);
    CHECK(record.total_completion_tokens == 19);
    CHECK(record.flags.empty());

    // The synthesis call keeps the template message by default.
    const auto& synthesis_messages = record.calls[2].request.messages.messages;
    CHECK(synthesis_messages[0].role == Role::System);

    // Candidate draws carry distinct seeds.
    REQUIRE(record.calls[0].request.seed.has_value());
    REQUIRE(record.calls[1].request.seed.has_value());
    CHECK(*record.calls[0].request.seed != *record.calls[1].request.seed);
}

TEST_CASE("r2p with n=0 skips self-referencing") {
    TaskInstance inst = lamp3_instance();
    PipelineConfig config = r2p_config(1, 0);
    MockBackend mock = MockBackend::sequence({{kCleanReply, 5, {}, {}, false}});

    RunRecord record = run_instance(config, inst, mock, mock_model());
    CHECK(record.calls.size() == 1);
    CHECK(record.final_answer == "3");
    CHECK(record.candidates.empty());
}

TEST_CASE("rpi retries a format failure once and recovers") {
    TaskInstance inst = lamp3_instance();
    PipelineConfig config = r2p_config(1, 2);
    MockBackend mock = MockBackend::sequence({
        {"<think>User Profile Integration.</think>\nmaybe 4?", 7, {}, {}, false},
        {"<think>User Profile Integration: fixed.</think>\n4", 6, {},
         std::string("Wait, the final answer must be a single integer from 1 to 5."), false},
        {"<think>User Profile Integration: fresh.</think>\n3", 6, {}, {}, false},
        {"4", 1, {}, std::string("Possible answers might be: 4, 3."), false},
    });

    RunRecord record = run_instance(config, inst, mock, mock_model());
    CHECK(record.calls.size() == 4);  // one failure adds exactly one call
    CHECK(record.interventions == 1);
    CHECK(record.interventions_per_candidate == std::vector<std::size_t>{1, 0});
    CHECK(record.final_answer == "4");
    CHECK(answer_matches_format(TaskKind::get(TaskId::LaMP_3), record.final_answer));
}

TEST_CASE("rpi injects the profile sentence when the profile check fails") {
    TaskInstance inst = lamp3_instance();
    PipelineConfig config = r2p_config(1, 0);
    MockBackend mock = MockBackend::sequence({
        {"3", 1, {}, {}, false},  // valid format, no engagement with the records
        {kCleanReply, 5, {}, std::string("Wait, let me analyze the user profile."), false},
    });

    RunRecord record = run_instance(config, inst, mock, mock_model());
    CHECK(record.calls.size() == 2);
    CHECK(record.interventions == 1);
    const auto& injected = record.calls[1].request.messages.messages;
    CHECK(injected[injected.size() - 1].content.find("Wait, let me analyze the user profile.") !=
          std::string::npos);
    CHECK(injected[injected.size() - 2].role == Role::Assistant);
}

TEST_CASE("rpi stops at the intervention budget and flags the record") {
    TaskInstance inst = lamp3_instance();
    PipelineConfig config = r2p_config(1, 0);
    config.max_interventions = 2;
    MockBackend mock = MockBackend::sequence({
        {"bad one", 2, {}, {}, false},
        {"still bad", 2, {}, {}, false},
        {"worse", 1, {}, {}, false},
    });

    RunRecord record = run_instance(config, inst, mock, mock_model());
    CHECK(record.calls.size() == 3);  // initial + exactly max_interventions
    CHECK(record.interventions == 2);
    CHECK(record.final_answer == "worse");
    CHECK(record.flags == std::vector<std::string>{"rpi_budget_exhausted"});
    for (std::size_t per : record.interventions_per_candidate) {
        CHECK(per <= config.max_interventions);
    }
}

TEST_CASE("classification vote takes the majority label") {
    Dataset d;
    d.task = TaskId::LaMP_2M;
    TaskInstance inst;
    inst.instance_id = "m1";
    inst.user_id = "u1";
    inst.task = TaskId::LaMP_2M;
    inst.input_text = "A spaceship crew drifts beyond the heliosphere.";
    inst.gold = "sci-fi";
    const TaskKind& task = TaskKind::get(TaskId::LaMP_2M);
    inst.profile.push_back(test_support::make_entry(
        task, "p1", {{"description", "A robot uprising on a mining colony."}, {"tag", "sci-fi"}}));

    PipelineConfig config = r2p_config(1, 3);
    config.classification_vote = true;
    config.use_rpi = false;

    SUBCASE("majority wins over the synthesis answer") {
        MockBackend mock = MockBackend::sequence({
            {"sci-fi", 1, {}, {}, false},
            {"sci-fi", 1, {}, {}, false},
            {"comedy", 1, {}, {}, false},
            {"comedy", 1, {}, std::string("Possible answers might be: sci-fi, sci-fi, comedy."), false},
        });
        RunRecord record = run_instance(config, inst, mock, mock_model());
        CHECK(record.calls.size() == 4);
        CHECK(record.final_answer == "sci-fi");
    }
    SUBCASE("tie falls back to the synthesis answer") {
        MockBackend mock = MockBackend::sequence({
            {"sci-fi", 1, {}, {}, false},
            {"comedy", 1, {}, {}, false},
            {"action", 1, {}, {}, false},
            {"comedy", 1, {}, {}, false},
        });
        RunRecord record = run_instance(config, inst, mock, mock_model());
        CHECK(record.final_answer == "comedy");
    }
}

TEST_CASE("all-empty candidates skip synthesis and flag the record") {
    TaskInstance inst = lamp3_instance();
    PipelineConfig config = r2p_config(1, 2);
    config.use_rpi = false;  // keep empty candidates as-is
    MockBackend mock = MockBackend::sequence({
        {"<think>nothing</think>", 2, {}, {}, false},
        {"<think>nothing again</think>", 2, {}, {}, false},
    });

    RunRecord record = run_instance(config, inst, mock, mock_model());
    CHECK(record.calls.size() == 2);  // no synthesis call
    CHECK(record.final_answer.empty());
    CHECK(record.flags == std::vector<std::string>{"all_candidates_empty"});
}

TEST_CASE("synthesis proceeds on the non-empty candidate subset") {
    TaskInstance inst = lamp3_instance();
    PipelineConfig config = r2p_config(1, 2);
    config.use_rpi = false;
    MockBackend mock = MockBackend::sequence({
        {"<think>quiet</think>", 1, {}, {}, false},
        {"<think>ok</think>\n4", 2, {}, {}, false},
        {"4", 1, {}, std::string("Possible answers might be: 4."), false},
    });

    RunRecord record = run_instance(config, inst, mock, mock_model());
    CHECK(record.calls.size() == 3);
    CHECK(record.final_answer == "4");
}

TEST_CASE("srm synthesis can drop the template message") {
    TaskInstance inst = lamp3_instance();
    PipelineConfig config = r2p_config(1, 1);
    config.use_rpi = false;
    config.srm_keep_hrt = false;
    MockBackend mock = MockBackend::sequence({
        {"<think>t</think>\n3", 2, {}, {}, false},
        {"3", 1, {}, {}, false},
    });

    RunRecord record = run_instance(config, inst, mock, mock_model());
    for (const auto& m : record.calls[1].request.messages.messages) {
        CHECK(m.role != Role::System);
    }
}

TEST_CASE("disabling every r2p module reproduces the rag transcript byte for byte") {
    TaskInstance inst = lamp3_instance();

    PipelineConfig rag = PipelineConfig::for_strategy(Strategy::Rag);
    rag.k = 1;
    rag.seed = 42;
    PipelineConfig bare = PipelineConfig::for_strategy(Strategy::R2p);
    bare.use_hrt = bare.use_rpi = bare.use_srm = false;
    bare.k = 1;
    bare.seed = 42;

    MockBackend mock_a = MockBackend::sequence({{"3", 3, {}, {}, false}});
    MockBackend mock_b = MockBackend::sequence({{"3", 3, {}, {}, false}});
    RunRecord a = run_instance(rag, inst, mock_a, mock_model());
    RunRecord b = run_instance(bare, inst, mock_b, mock_model());

    REQUIRE(a.calls.size() == b.calls.size());
    for (std::size_t i = 0; i < a.calls.size(); ++i) {
        CHECK(request_to_json(a.calls[i].request).dump() ==
              request_to_json(b.calls[i].request).dump());
        CHECK(a.calls[i].response.text == b.calls[i].response.text);
    }
}

TEST_CASE("backend failures carry the partial record") {
    TaskInstance inst = lamp3_instance();
    PipelineConfig config = r2p_config(1, 2);
    MockBackend mock = MockBackend::sequence({
        {kCleanReply, 10, {}, {}, false},
        {"", 0, {}, {}, true},  // candidate 2 dies
    });

    try {
        run_instance(config, inst, mock, mock_model());
        FAIL("expected PipelineError");
    } catch (const PipelineError& e) {
        CHECK(e.partial_record.instance_id == inst.instance_id);
        CHECK(e.partial_record.calls.size() == 1);  // the successful first call
    }
}

TEST_CASE("config invariants") {
    PipelineConfig rag = PipelineConfig::for_strategy(Strategy::Rag);
    CHECK(!rag.use_hrt);
    CHECK(!rag.use_rpi);
    CHECK(!rag.use_srm);
    rag.use_hrt = true;
    CHECK_THROWS_AS(rag.validate(), ConfigError);

    PipelineConfig r2p = PipelineConfig::for_strategy(Strategy::R2p);
    CHECK(r2p.use_hrt);
    CHECK(r2p.use_rpi);
    CHECK(r2p.use_srm);

    PipelineConfig bad = PipelineConfig::for_strategy(Strategy::Rag);
    bad.context = ContextStrategy::None;
    bad.k = 2;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    PipelineConfig zero = PipelineConfig::for_strategy(Strategy::R2p);
    zero.max_interventions = 0;
    CHECK_THROWS_AS(zero.validate(), ConfigError);

    CHECK(parse_strategy("self-verify") == Strategy::SelfVerification);
    CHECK(parse_strategy("R2P") == Strategy::R2p);
    CHECK_THROWS_AS(parse_strategy("unknown"), ConfigError);
}

TEST_CASE("hrt is present in r2p requests and absent in rag requests") {
    TaskInstance inst = lamp3_instance();

    PipelineConfig r2p = r2p_config(1, 0);
    MockBackend mock = MockBackend::sequence(
        {{kCleanReply, 5, {}, std::string("Format Alignment and Checking"), false}});
    RunRecord record = run_instance(r2p, inst, mock, mock_model());
    CHECK(record.calls[0].request.messages.messages[0].role == Role::System);

    PipelineConfig rag = PipelineConfig::for_strategy(Strategy::Rag);
    rag.k = 1;
    rag.seed = 42;
    MockBackend plain = MockBackend::sequence({{"3", 1, {}, {}, false}});
    RunRecord rag_record = run_instance(rag, inst, plain, mock_model());
    for (const auto& m : rag_record.calls[0].request.messages.messages) {
        CHECK(m.role != Role::System);
    }
}
