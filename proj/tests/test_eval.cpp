#include "adaprompt/eval.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "support/test_support.hpp"

using namespace adaprompt;
namespace fs = std::filesystem;

namespace {
const std::vector<std::string> kLabels = {"positive", "negative"};
}

TEST(LoadDataset, TsvWithHeader) {
    const auto dir = testsupport::unique_temp_dir("ds_tsv");
    testsupport::write_file(dir + "/d.tsv",
                            "text\tlabel\nA charming journey.\tpositive\nDull and gray.\tnegative\n");
    const auto examples = load_dataset(dir + "/d.tsv", DatasetSchema{}, kLabels);
    ASSERT_EQ(examples.size(), 2u);
    EXPECT_EQ(examples[0].text, "A charming journey.");
    EXPECT_EQ(examples[0].gold, "positive");
    EXPECT_EQ(examples[0].example_id, "0");
    EXPECT_EQ(examples[1].example_id, "1");
    fs::remove_all(dir);
}

TEST(LoadDataset, UnknownLabelNamesLineAndValue) {
    const auto dir = testsupport::unique_temp_dir("ds_badlabel");
    testsupport::write_file(dir + "/d.tsv", "text\tlabel\nfine\tpositive\noops\tpositiv\n");
    try {
        load_dataset(dir + "/d.tsv", DatasetSchema{}, kLabels);
        FAIL() << "expected validation error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Validation);
        const std::string msg = e.what();
        EXPECT_NE(msg.find(":3"), std::string::npos) << msg;
        EXPECT_NE(msg.find("positiv"), std::string::npos) << msg;
    }
    fs::remove_all(dir);
}

TEST(LoadDataset, EmptyFileRejected) {
    const auto dir = testsupport::unique_temp_dir("ds_empty");
    testsupport::write_file(dir + "/d.tsv", "");
    try {
        load_dataset(dir + "/d.tsv", DatasetSchema{}, kLabels);
        FAIL() << "expected empty-dataset error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::EmptyDataset);
    }
    testsupport::write_file(dir + "/h.tsv", "text\tlabel\n");
    EXPECT_THROW(load_dataset(dir + "/h.tsv", DatasetSchema{}, kLabels), Error);
    fs::remove_all(dir);
}

TEST(LoadDataset, LabelMapApplies) {
    const auto dir = testsupport::unique_temp_dir("ds_map");
    testsupport::write_file(dir + "/d.tsv", "text\tlabel\ngreat\t1\nawful\t0\n");
    const auto examples = load_dataset(dir + "/d.tsv", DatasetSchema{}, kLabels,
                                       {{"1", "positive"}, {"0", "negative"}});
    EXPECT_EQ(examples[0].gold, "positive");
    EXPECT_EQ(examples[1].gold, "negative");
    // A value outside the map is an error.
    testsupport::write_file(dir + "/bad.tsv", "text\tlabel\ngreat\t2\n");
    EXPECT_THROW(load_dataset(dir + "/bad.tsv", DatasetSchema{}, kLabels,
                              {{"1", "positive"}, {"0", "negative"}}),
                 Error);
    fs::remove_all(dir);
}

TEST(LoadDataset, JsonlWithDeclaredFields) {
    const auto dir = testsupport::unique_temp_dir("ds_jsonl");
    testsupport::write_file(dir + "/d.jsonl",
                            "{\"sentence\":\"fun ride\",\"sentiment\":\"positive\",\"id\":\"a7\"}\n"
                            "{\"sentence\":\"boring\",\"sentiment\":\"negative\",\"id\":\"a9\"}\n");
    DatasetSchema schema;
    schema.format = DatasetSchema::Format::Jsonl;
    schema.text_field = "sentence";
    schema.label_field = "sentiment";
    schema.id_field = "id";
    const auto examples = load_dataset(dir + "/d.jsonl", schema, kLabels);
    ASSERT_EQ(examples.size(), 2u);
    EXPECT_EQ(examples[0].example_id, "a7");
    EXPECT_EQ(examples[1].text, "boring");
    fs::remove_all(dir);
}

TEST(LoadDataset, MissingColumnRejected) {
    const auto dir = testsupport::unique_temp_dir("ds_col");
    testsupport::write_file(dir + "/d.tsv", "body\tlabel\nfine\tpositive\n");
    EXPECT_THROW(load_dataset(dir + "/d.tsv", DatasetSchema{}, kLabels), Error);
    fs::remove_all(dir);
}

namespace {
std::vector<Prediction> make_predictions(const std::vector<std::pair<std::string, std::string>>& rows) {
    std::vector<Prediction> out;
    for (size_t i = 0; i < rows.size(); ++i)
        out.push_back(Prediction{std::to_string(i), rows[i].first, rows[i].second, {}});
    return out;
}
} // namespace

TEST(Accuracy, BasicFractions) {
    EXPECT_DOUBLE_EQ(accuracy(make_predictions({{"a", "a"}, {"b", "b"}})), 1.0);
    EXPECT_DOUBLE_EQ(accuracy(make_predictions({{"a", "b"}, {"b", "a"}})), 0.0);
    EXPECT_DOUBLE_EQ(accuracy(make_predictions({{"a", "a"}, {"b", "b"}, {"c", "c"}, {"d", "x"}})),
                     0.75);
}

TEST(Accuracy, AlignmentErrors) {
    std::vector<LabeledExample> gold = {{"0", "t", "a"}, {"1", "t", "b"}};
    auto predictions = make_predictions({{"a", "a"}, {"b", "b"}});
    EXPECT_DOUBLE_EQ(accuracy(predictions, gold), 1.0);
    predictions[1].example_id = "7";
    try {
        accuracy(predictions, gold);
        FAIL() << "expected alignment error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Alignment);
    }
    predictions.pop_back();
    EXPECT_THROW(accuracy(predictions, gold), Error);
}

TEST(Accuracy, PermutationInvariant) {
    auto predictions = make_predictions({{"a", "a"}, {"b", "x"}, {"c", "c"}, {"d", "d"}});
    const double base = accuracy(predictions);
    std::mt19937 rng(5);
    for (int i = 0; i < 10; ++i) {
        std::shuffle(predictions.begin(), predictions.end(), rng);
        EXPECT_DOUBLE_EQ(accuracy(predictions), base);
    }
}

TEST(AggregatePatterns, SinglePattern) {
    const auto r = aggregate_patterns({0.8});
    EXPECT_DOUBLE_EQ(r.mean, 0.8);
    EXPECT_DOUBLE_EQ(r.std_dev, 0.0);
    EXPECT_DOUBLE_EQ(r.best, 0.8);
}

TEST(AggregatePatterns, TwoPatternsPopulationStd) {
    const auto r = aggregate_patterns({0.6, 0.8});
    EXPECT_DOUBLE_EQ(r.mean, 0.7);
    EXPECT_NEAR(r.std_dev, 0.1, 1e-12);
    EXPECT_DOUBLE_EQ(r.best, 0.8);
    EXPECT_EQ(format_pattern_summary(r), "70.00/10.00(80.00)");
}

TEST(AggregatePatterns, SampleStdConfigurable) {
    const auto pop = aggregate_patterns({0.6, 0.8}, 0, false);
    const auto smp = aggregate_patterns({0.6, 0.8}, 0, true);
    EXPECT_NEAR(pop.std_dev, 0.1, 1e-12);
    EXPECT_NEAR(smp.std_dev, 0.1 * std::sqrt(2.0), 1e-12);
}

TEST(AggregatePatterns, RepeatedValueHasZeroStd) {
    const auto r = aggregate_patterns({0.42, 0.42, 0.42, 0.42});
    EXPECT_DOUBLE_EQ(r.mean, 0.42);
    EXPECT_DOUBLE_EQ(r.std_dev, 0.0);
    EXPECT_DOUBLE_EQ(r.best, 0.42);
}

TEST(AggregatePatterns, InvariantsOnRandomInputs) {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> acc(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> xs;
        const size_t n = 1 + rng() % 6;
        for (size_t i = 0; i < n; ++i) xs.push_back(acc(rng));
        const auto r = aggregate_patterns(xs);
        EXPECT_LE(*std::min_element(xs.begin(), xs.end()), r.mean + 1e-15);
        EXPECT_GE(*std::max_element(xs.begin(), xs.end()) + 1e-15, r.mean);
        EXPECT_DOUBLE_EQ(r.best, *std::max_element(xs.begin(), xs.end()));
        EXPECT_GE(r.std_dev, 0.0);
    }
}

TEST(AggregatePatterns, EmptyInputRejected) { EXPECT_THROW(aggregate_patterns({}), Error); }

TEST(PatternReport, TargetOutputFormat) {
    // The tables report "mean/std(best)" percentages with two decimals.
    PatternReport r;
    r.mean = 0.6456;
    r.std_dev = 0.1677;
    r.best = 0.8899;
    EXPECT_EQ(format_pattern_summary(r), "64.56/16.77(88.99)");
}

TEST(PatternReport, JsonRoundTripLossless) {
    const auto r = aggregate_patterns({1.0 / 3.0, 2.0 / 7.0, 0.123456789012345}, 872);
    const auto j = r.to_json();
    const auto back = PatternReport::from_json(nlohmann::json::parse(j.dump()));
    EXPECT_EQ(back.per_pattern, r.per_pattern);
    EXPECT_EQ(back.mean, r.mean);
    EXPECT_EQ(back.std_dev, r.std_dev);
    EXPECT_EQ(back.best, r.best);
    EXPECT_EQ(back.n_examples, r.n_examples);
}

TEST(PredictionsFile, SaveLoadRoundTrip) {
    const auto dir = testsupport::unique_temp_dir("preds");
    std::vector<Prediction> predictions;
    predictions.push_back(
        {"0", "positive", "positive", {{"positive", 1.0 / 3.0}, {"negative", 0.25}}});
    predictions.push_back(
        {"1", "negative", "positive", {{"positive", 0.5}, {"negative", 0.125}}});
    save_predictions(predictions, kLabels, dir + "/p.tsv");
    const auto loaded = load_predictions(dir + "/p.tsv");
    ASSERT_EQ(loaded.size(), 2u);
    EXPECT_EQ(loaded[0].example_id, "0");
    EXPECT_EQ(loaded[1].predicted, "positive");
    ASSERT_EQ(loaded[0].scores.size(), 2u);
    EXPECT_EQ(loaded[0].scores[0].label, "positive");
    EXPECT_DOUBLE_EQ(loaded[0].scores[0].score, 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(loaded[1].scores[1].score, 0.125);
    fs::remove_all(dir);
}
