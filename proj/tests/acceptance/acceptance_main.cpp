// Acceptance suite: one test per release criterion, one PASS/FAIL line each.

#include <gtest/gtest.h>

#include <cstdio>

namespace {

class CriterionPrinter : public ::testing::EmptyTestEventListener {
    void OnTestEnd(const ::testing::TestInfo& info) override {
        const bool ok = info.result()->Passed();
        std::printf("[criterion] %s %-28s %8.3f s\n", ok ? "PASS" : "FAIL", info.name(),
                    static_cast<double>(info.result()->elapsed_time()) / 1000.0);
        std::fflush(stdout);
    }

    void OnTestProgramEnd(const ::testing::UnitTest& unit) override {
        std::printf("[criterion] %d passed, %d failed\n", unit.successful_test_count(), unit.failed_test_count());
    }
};

}  // namespace

int main(int argc, char** argv) {
    ::testing::InitGoogleTest(&argc, argv);
    ::testing::UnitTest::GetInstance()->listeners().Append(new CriterionPrinter);
    return RUN_ALL_TESTS();
}
