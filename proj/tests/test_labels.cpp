#include <gtest/gtest.h>

#include <random>
#include <set>

#include "ecgdl/labels.hpp"

using namespace ecgdl;
using namespace ecgdl::labels;

TEST(MapToSuperclass, KnownCodes) {
    EXPECT_EQ(map_to_superclass("NORM"), Superclass::NORM);
    EXPECT_EQ(map_to_superclass("LNGQT"), Superclass::STTC);
    EXPECT_EQ(map_to_superclass("ASMI"), Superclass::MI);
    EXPECT_EQ(map_to_superclass("LVH"), Superclass::HYP);
    EXPECT_EQ(map_to_superclass("CLBBB"), Superclass::CD);
    EXPECT_EQ(map_to_superclass("AFIB"), Superclass::OTHER);
    EXPECT_EQ(map_to_superclass("LAO/LAE"), Superclass::HYP);
}

TEST(MapToSuperclass, UnknownCodeThrows) {
    EXPECT_THROW(map_to_superclass("XYZ"), UnknownCode);
    EXPECT_THROW(map_to_superclass(""), UnknownCode);
    EXPECT_THROW(map_to_superclass("norm"), UnknownCode); // case sensitive
}

TEST(CodeTable, EveryEntryMapsAndIsUnique) {
    std::set<std::string_view> seen;
    for (const auto& e : kCodeTable) {
        EXPECT_TRUE(is_known_code(e.code));
        EXPECT_EQ(map_to_superclass(e.code), e.superclass);
        EXPECT_TRUE(seen.insert(e.code).second) << "duplicate code " << e.code;
    }
}

TEST(CodeTable, PerClassCounts) {
    std::map<Superclass, int> counts;
    for (const auto& e : kCodeTable) counts[e.superclass]++;
    EXPECT_EQ(counts[Superclass::NORM], 1);
    EXPECT_EQ(counts[Superclass::STTC], 13);
    EXPECT_EQ(counts[Superclass::MI], 14);
    EXPECT_EQ(counts[Superclass::HYP], 5);
    EXPECT_EQ(counts[Superclass::CD], 11);
    EXPECT_EQ(counts[Superclass::OTHER], 7);
}

TEST(SelectBinaryLabel, MaxConfidenceSttcGroupIsAbnormal) {
    const std::map<std::string, double> scp{
        {"IMI", 15.0}, {"LNGQT", 100.0}, {"NST_", 100.0},
        {"DIG", 100.0}, {"ABQRS", 0.0},  {"SR", 0.0}};
    EXPECT_EQ(select_binary_label(scp).value, 1);
}

TEST(SelectBinaryLabel, LowConfidenceMappableCodeBeatsUnmappable) {
    const std::map<std::string, double> scp{{"ASMI", 15.0}, {"ABQRS", 0.0}, {"SR", 0.0}};
    EXPECT_EQ(select_binary_label(scp).value, 1);
}

TEST(SelectBinaryLabel, SingleNormalCode) {
    EXPECT_EQ(select_binary_label({{"NORM", 100.0}}).value, 0);
}

TEST(SelectBinaryLabel, ZeroConfidenceStillCounts) {
    EXPECT_EQ(select_binary_label({{"PVC", 0.0}, {"SR", 0.0}}).value, 1);
}

TEST(SelectBinaryLabel, NoMappableCodeThrows) {
    EXPECT_THROW(select_binary_label({{"ABQRS", 50.0}, {"SR", 0.0}}), UnlabeledRecord);
}

TEST(SelectBinaryLabel, CrossClassTieUsesPriority) {
    // NORM vs CD tied: CD outranks NORM in the default priority
    EXPECT_EQ(select_binary_label({{"NORM", 80.0}, {"CLBBB", 80.0}}).value, 1);
    // with an inverted priority the same tie resolves to normal
    constexpr std::array<Superclass, 6> inverted{
        Superclass::CD, Superclass::HYP, Superclass::MI,
        Superclass::STTC, Superclass::OTHER, Superclass::NORM};
    EXPECT_EQ(select_binary_label({{"NORM", 80.0}, {"CLBBB", 80.0}}, inverted).value, 0);
}

TEST(SelectBinaryLabel, SameOutcomeTieIgnoresPriority) {
    // both abnormal, priority irrelevant
    EXPECT_EQ(select_binary_label({{"IMI", 90.0}, {"AFIB", 90.0}}).value, 1);
}

TEST(SelectBinaryLabel, RescaleInvarianceProperty) {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<std::size_t> pick(0, kCodeTable.size() - 1);
    std::uniform_real_distribution<double> conf(0.0, 100.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::map<std::string, double> scp;
        const int k = 1 + static_cast<int>(rng() % 5);
        for (int i = 0; i < k; ++i)
            scp[std::string(kCodeTable[pick(rng)].code)] = conf(rng);
        const int base = select_binary_label(scp).value;
        for (double scale : {0.5, 2.0, 13.7}) {
            auto scaled = scp;
            for (auto& [code, c] : scaled) c *= scale;
            EXPECT_EQ(select_binary_label(scaled).value, base);
        }
    }
}

TEST(ComputeClassWeights, FortySixty) {
    std::vector<BinaryLabel> labels;
    for (int i = 0; i < 40; ++i) labels.push_back({0});
    for (int i = 0; i < 60; ++i) labels.push_back({1});
    const auto w = compute_class_weights(labels);
    EXPECT_DOUBLE_EQ(w.weight_normal, 1.25);
    EXPECT_NEAR(w.weight_abnormal, 100.0 / 120.0, 1e-12);
}

TEST(ComputeClassWeights, BalancedIsUnit) {
    std::vector<BinaryLabel> labels;
    for (int i = 0; i < 50; ++i) labels.push_back({0});
    for (int i = 0; i < 50; ++i) labels.push_back({1});
    const auto w = compute_class_weights(labels);
    EXPECT_DOUBLE_EQ(w.weight_normal, 1.0);
    EXPECT_DOUBLE_EQ(w.weight_abnormal, 1.0);
}

TEST(ComputeClassWeights, MissingClassThrows) {
    EXPECT_THROW(compute_class_weights({{0}, {0}, {0}}), DegenerateDistribution);
    EXPECT_THROW(compute_class_weights({{1}}), DegenerateDistribution);
    EXPECT_THROW(compute_class_weights({}), DegenerateDistribution);
}

TEST(ComputeClassWeights, WeightedCountEqualsUnweightedProperty) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<BinaryLabel> labels;
        const int n0 = 1 + static_cast<int>(rng() % 200);
        const int n1 = 1 + static_cast<int>(rng() % 200);
        for (int i = 0; i < n0; ++i) labels.push_back({0});
        for (int i = 0; i < n1; ++i) labels.push_back({1});
        const auto w = compute_class_weights(labels);
        double total = 0;
        for (const auto& l : labels) total += w.of(l.value);
        EXPECT_NEAR(total, static_cast<double>(labels.size()), 1e-9);
    }
}

TEST(ComputeClassWeights, MoreAbnormalsLowerAbnormalWeight) {
    double prev = std::numeric_limits<double>::infinity();
    for (int n1 : {10, 20, 40, 80}) {
        std::vector<BinaryLabel> labels;
        for (int i = 0; i < 30; ++i) labels.push_back({0});
        for (int i = 0; i < n1; ++i) labels.push_back({1});
        const double w1 = compute_class_weights(labels).weight_abnormal;
        EXPECT_LT(w1, prev);
        prev = w1;
    }
}
