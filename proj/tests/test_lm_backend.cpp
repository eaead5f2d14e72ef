#include "adaprompt/lm_backend.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "support/test_support.hpp"

using namespace adaprompt;

namespace {

CountMlmBackend trained_backend(const std::vector<std::string>& sentences, double alpha = 0.1,
                                int radius = 5) {
    CountMlmBackend backend(alpha, radius);
    backend.train_on(sentences);
    return backend;
}

const std::vector<std::string> kToySentence = {
    "the movie is good . the movie is good . the food is bad ."};

} // namespace

TEST(CountBackendTraining, WindowCountsMatchDefinition) {
    CountMlmBackend backend(0.1, 2);
    backend.train_on({"a b c a"});
    // tokens: a b c a (positions 0..3), radius 2
    EXPECT_EQ(backend.unigram_count("a"), 2u);
    EXPECT_EQ(backend.unigram_count("b"), 1u);
    EXPECT_EQ(backend.total_tokens(), 4u);
    EXPECT_EQ(backend.cooccur_count("a", "b"), 2u); // pairs (0,1) and (3,1)
    EXPECT_EQ(backend.cooccur_count("b", "a"), 2u);
    EXPECT_EQ(backend.cooccur_count("a", "a"), 0u); // |0-3| exceeds the radius
}

TEST(CountBackendTraining, WindowRadiusRespected) {
    CountMlmBackend backend(0.1, 1);
    backend.train_on({"x y z"});
    EXPECT_EQ(backend.cooccur_count("x", "y"), 1u);
    EXPECT_EQ(backend.cooccur_count("x", "z"), 0u) << "z is outside radius 1 of x";
    EXPECT_EQ(backend.cooccur_count("y", "x"), 1u);
    EXPECT_EQ(backend.cooccur_count("y", "z"), 1u);
}

TEST(CountBackendTraining, OrderIndependence) {
    const std::vector<std::string> sentences = {"alpha beta gamma", "beta delta",
                                                "gamma alpha beta beta"};
    auto forward = trained_backend(sentences);
    auto reversed = trained_backend({sentences[2], sentences[1], sentences[0]});
    std::ostringstream a, b;
    forward.serialize(a);
    reversed.serialize(b);
    EXPECT_EQ(a.str(), b.str());
}

TEST(CountBackendTraining, TrainingTwiceDoublesCounts) {
    const std::vector<std::string> sentences = {"the movie is good", "the plot is good",
                                                "a good story"};
    auto once = trained_backend(sentences);
    auto twice = trained_backend(sentences);
    twice.train_on(sentences);
    EXPECT_EQ(twice.total_tokens(), 2 * once.total_tokens());
    EXPECT_EQ(twice.unigram_count("good"), 2 * once.unigram_count("good"));
    EXPECT_EQ(twice.cooccur_count("good", "is"), 2 * once.cooccur_count("good", "is"));
}

// Argmax invariance under uniform count doubling, asserted by exhaustive
// scoring on a corpus where every count is >= 1.
TEST(CountBackendTraining, TopPredictionStableUnderDoubling) {
    const std::vector<std::string> sentences = {
        "the movie is good", "the movie is great",  "the film is good",  "the story is good",
        "the plot is bad",   "the acting is good",  "the movie is good", "a good movie indeed",
        "the film is great", "the good story wins"};
    auto once = trained_backend(sentences, 0.1, 3);
    auto twice = trained_backend(sentences, 0.1, 3);
    twice.train_on(sentences);

    const std::string masked = "the movie is <mask>";
    const auto ctx = once.mask_context(masked);
    auto argmax = [&](const CountMlmBackend& b) {
        std::string best;
        double best_score = -std::numeric_limits<double>::infinity();
        for (const auto& p : b.mask_distribution(ctx))
            if (p.prob > best_score ||
                (p.prob == best_score && p.token < best)) {
                best = p.token;
                best_score = p.prob;
            }
        return best;
    };
    EXPECT_EQ(argmax(once), argmax(twice));
    EXPECT_EQ(once.predict_fillers(masked, 1).front().token,
              twice.predict_fillers(masked, 1).front().token);
}

TEST(CountBackendPredict, GoodOutranksBadOnToyCorpus) {
    const auto backend = trained_backend(kToySentence, 0.1, 5);
    const auto top = backend.predict_fillers("the movie is <mask>", 1);
    ASSERT_EQ(top.size(), 1u);
    EXPECT_EQ(top.front().token, "good");

    // Cross-check the full distribution against the independent oracle.
    const auto counts = testsupport::oracle_counts(kToySentence, 5);
    const auto dist = testsupport::oracle_mask_distribution(counts, {"the", "movie", "is"}, 0.1);
    EXPECT_GT(dist.at("good"), dist.at("bad"));
    for (const auto& p : backend.mask_distribution(backend.mask_context("the movie is <mask>")))
        EXPECT_NEAR(p.prob, dist.at(p.token), 1e-9);
}

TEST(CountBackendPredict, TopZeroGivesEmptyList) {
    const auto backend = trained_backend(kToySentence);
    EXPECT_TRUE(backend.predict_fillers("the movie is <mask>", 0).empty());
}

TEST(CountBackendPredict, MultipleMarkersRejected) {
    const auto backend = trained_backend(kToySentence);
    try {
        backend.predict_fillers("<mask> <mask>", 3);
        FAIL() << "expected malformed-prompt error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::MalformedPrompt);
    }
    EXPECT_THROW(backend.predict_fillers("no marker here", 3), Error);
}

TEST(CountBackendPredict, UntrainedBackendRejected) {
    CountMlmBackend backend;
    try {
        backend.predict_fillers("the movie is <mask>", 3);
        FAIL() << "expected empty-model error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::EmptyModel);
    }
}

TEST(CountBackendPredict, ProbabilitiesNormalized) {
    const auto backend = trained_backend(kToySentence);
    double sum = 0.0;
    for (const auto& p : backend.predict_fillers("the movie is <mask>", 1000)) {
        EXPECT_GT(p.prob, 0.0);
        sum += p.prob;
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
}

TEST(CountBackendPredict, SortedByProbThenToken) {
    const auto backend = trained_backend(kToySentence);
    const auto preds = backend.predict_fillers("the movie is <mask>", 1000);
    for (size_t i = 1; i < preds.size(); ++i) {
        const bool ordered = preds[i - 1].prob > preds[i].prob ||
                             (preds[i - 1].prob == preds[i].prob &&
                              preds[i - 1].token < preds[i].token);
        EXPECT_TRUE(ordered) << "at " << i;
    }
}

TEST(CountBackendPredict, PureAcrossCalls) {
    const auto backend = trained_backend(kToySentence);
    const auto a = backend.predict_fillers("the movie is <mask>", 5);
    const auto b = backend.predict_fillers("the movie is <mask>", 5);
    ASSERT_EQ(a.size(), b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].token, b[i].token);
        EXPECT_EQ(a[i].prob, b[i].prob);
    }
}

TEST(CountBackendPredict, AllZeroCountsGiveUniform) {
    CountMlmBackend backend;
    backend.add_vocabulary({"alpha", "beta", "gamma", "delta"});
    const auto preds = backend.predict_fillers("anything <mask> goes", 10);
    ASSERT_EQ(preds.size(), 4u);
    for (const auto& p : preds) EXPECT_NEAR(p.prob, 0.25, 1e-12);
    // Ties resolve lexicographically.
    EXPECT_EQ(preds[0].token, "alpha");
    EXPECT_EQ(preds[3].token, "gamma");
}

TEST(CountBackendScore, EmptyContextIsSmoothedUnigram) {
    CountMlmBackend backend(1.0, 5);
    backend.train_on({"red red blue"});
    // With an empty context the distribution reduces to
    // (uni(w)+a) / (T + a*V) exactly.
    const auto wp = backend.word_probability("<mask>", "red");
    const double expected = (2.0 + 1.0) / (3.0 + 1.0 * 2.0);
    EXPECT_NEAR(wp.prob, expected, 1e-12);
    EXPECT_FALSE(wp.out_of_vocabulary);
}

TEST(CountBackendScore, DistributionMatchesOracleOnThreeSentences) {
    const std::vector<std::string> corpus = {"the cat sat on the mat", "the dog sat on the rug",
                                             "a cat and a dog played"};
    const auto backend = trained_backend(corpus, 0.1, 3);
    const auto counts = testsupport::oracle_counts(corpus, 3);
    const auto ctx = backend.mask_context("the cat <mask> on");
    const auto oracle = testsupport::oracle_mask_distribution(counts, ctx, 0.1);
    double sum = 0.0;
    for (const auto& p : backend.mask_distribution(ctx)) {
        EXPECT_NEAR(p.prob, oracle.at(p.token), 1e-9) << p.token;
        sum += p.prob;
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
}

TEST(CountBackendScore, OovWordGetsSmoothedProbabilityAndFlag) {
    const auto backend = trained_backend(kToySentence);
    const auto wp = backend.word_probability("the movie is <mask>", "unseenword");
    EXPECT_TRUE(wp.out_of_vocabulary);
    EXPECT_GT(wp.prob, 0.0);
    EXPECT_LT(wp.prob, 1.0);
}

TEST(CountBackendScore, WordProbabilityMatchesDistribution) {
    const auto backend = trained_backend(kToySentence);
    const std::string masked = "the movie is <mask>";
    const auto dist = backend.mask_distribution(backend.mask_context(masked));
    for (const auto& p : dist)
        EXPECT_EQ(backend.word_probability(masked, p.token).prob, p.prob) << p.token;
}

TEST(CountBackendTrainOp, ReturnsNewStateAndKeepsOriginal) {
    const auto base = std::make_shared<CountMlmBackend>(trained_backend(kToySentence));
    const auto before = base->predict_fillers("the movie is <mask>", 3);
    const auto trained = base->continual_train({"the movie is superb", "superb movie overall"}, {});
    EXPECT_NE(base->checkpoint_id(), trained->checkpoint_id());
    const auto after = base->predict_fillers("the movie is <mask>", 3);
    ASSERT_EQ(before.size(), after.size());
    for (size_t i = 0; i < before.size(); ++i) {
        EXPECT_EQ(before[i].token, after[i].token);
        EXPECT_EQ(before[i].prob, after[i].prob);
    }
}

TEST(CountBackendTrainOp, EmptySetIsNoOpWithWarning) {
    const auto base = std::make_shared<CountMlmBackend>(trained_backend(kToySentence));
    std::vector<std::string> warnings;
    const auto same = base->continual_train({}, {}, &warnings);
    EXPECT_EQ(same->checkpoint_id(), base->checkpoint_id());
    ASSERT_EQ(warnings.size(), 1u);
}

TEST(CountBackendState, SerializationRoundTripsExactly) {
    const auto backend = trained_backend({"the movie is good", "a fine day"}, 0.25, 4);
    std::ostringstream first;
    backend.serialize(first);
    std::istringstream in(first.str());
    const auto restored = CountMlmBackend::deserialize(in);
    std::ostringstream second;
    restored.serialize(second);
    EXPECT_EQ(first.str(), second.str());
    EXPECT_EQ(restored.alpha(), backend.alpha());
    EXPECT_EQ(restored.radius(), backend.radius());
    EXPECT_EQ(restored.total_tokens(), backend.total_tokens());
    EXPECT_EQ(restored.checkpoint_id(), backend.checkpoint_id());
}

TEST(CountBackendState, ConfigurableMaskMarker) {
    CountMlmBackend backend(0.1, 5, "[MASK]");
    backend.train_on({"the movie is good"});
    EXPECT_EQ(backend.predict_fillers("the movie is [MASK]", 1).size(), 1u);
    EXPECT_THROW(backend.predict_fillers("the movie is <mask>", 1), Error);
}

TEST(TrainConfig, SerializesPaperHyperparameters) {
    const TrainConfig config;
    const auto j = config.to_json();
    EXPECT_DOUBLE_EQ(j["learning_rate"].get<double>(), 1e-5);
    EXPECT_EQ(j["batch_size"].get<int>(), 96);
    EXPECT_EQ(j["epochs"].get<int>(), 3);
    EXPECT_EQ(j["eval_checkpoint_step"].get<int>(), 500);
}
