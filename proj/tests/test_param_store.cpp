#include "gantts/param_store.hpp"

#include <gtest/gtest.h>

#include <filesystem>

#include "gantts/rng.hpp"

namespace {

using namespace gantts;

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

ParamStore sample_store() {
    ParamStore ps;
    Rng rng(3, 1);
    Tensor w = Tensor::zeros({4, 3});
    for (i64 i = 0; i < w.numel(); ++i) w.raw()[i] = rng.next_normal();
    ps.create("g.block1.conv1.w", std::move(w));
    ps.create("g.block1.conv1.b", Tensor::full({3}, 0.25));
    ps.create("g.block1.conv1.w#adam_m", Tensor::full({4, 3}, 1e-3));
    ps.create("g.block1.cbn1#aux:running_mean", Tensor::full({3}, 0.5));
    return ps;
}

TEST(ParamStore, CreateGetContains) {
    ParamStore ps = sample_store();
    EXPECT_TRUE(ps.contains("g.block1.conv1.w"));
    EXPECT_FALSE(ps.contains("g.block1.conv2.w"));
    EXPECT_EQ(ps.get("g.block1.conv1.b").values()[0], 0.25);
    EXPECT_THROW(ps.get("nope"), std::exception);
    EXPECT_THROW(ps.create("g.block1.conv1.w", Tensor::zeros({1})), std::exception);
}

TEST(ParamStore, SetReplacesPayloadWithoutAliasing) {
    ParamStore ps = sample_store();
    Tensor before = ps.get("g.block1.conv1.b");  // shallow handle to old payload
    ps.set("g.block1.conv1.b", Tensor::full({3}, 9.0));
    EXPECT_EQ(ps.get("g.block1.conv1.b").values()[0], 9.0);
    EXPECT_EQ(before.values()[0], 0.25);  // old payload untouched
    EXPECT_THROW(ps.set("missing", Tensor::zeros({1})), std::exception);
    EXPECT_THROW(ps.set("g.block1.conv1.b", Tensor::zeros({4})), std::exception);  // shape change
}

TEST(ParamStore, PathClassification) {
    EXPECT_TRUE(ParamStore::is_param_path("g.block1.conv1.w"));
    EXPECT_FALSE(ParamStore::is_param_path("g.block1.conv1.w#adam_m"));
    EXPECT_FALSE(ParamStore::is_param_path("g.block1.cbn1#aux:running_mean"));
    ParamStore ps = sample_store();
    EXPECT_EQ(ps.total_param_elements(), 4 * 3 + 3);
}

TEST(ParamStore, SaveLoadValueExact) {
    const std::string path = tmp_path("gantts_store.gtts");
    ParamStore ps = sample_store();
    ps.save(path);
    ParamStore back = ParamStore::load(path);
    i64 entries = 0;
    for (const auto& [p, t] : ps) {
        ASSERT_TRUE(back.contains(p)) << p;
        const Tensor& bt = back.get(p);
        ASSERT_EQ(bt.shape, t.shape);
        for (i64 i = 0; i < t.numel(); ++i) EXPECT_EQ(bt.values()[i], t.values()[i]);
        ++entries;
    }
    i64 back_entries = 0;
    for (const auto& kv : back) {
        (void)kv;
        ++back_entries;
    }
    EXPECT_EQ(entries, back_entries);
    std::filesystem::remove(path);
}

TEST(ParamStore, SaveIsByteStable) {
    const std::string p1 = tmp_path("gantts_store1.gtts");
    const std::string p2 = tmp_path("gantts_store2.gtts");
    ParamStore ps = sample_store();
    ps.save(p1);
    ps.save(p2);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    EXPECT_FALSE(b1.empty());
    EXPECT_EQ(b1, b2);
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
}

TEST(ParamStore, LoadRejectsBadFiles) {
    const std::string path = tmp_path("gantts_bad.gtts");
    std::ofstream f(path, std::ios::binary);
    f << "NOPE12345678";
    f.close();
    EXPECT_THROW(ParamStore::load(path), std::exception);
    EXPECT_THROW(ParamStore::load(tmp_path("gantts_never_written.gtts")), std::exception);
    std::filesystem::remove(path);
}

TEST(ParamStore, CloneIsDeep) {
    ParamStore ps = sample_store();
    ParamStore cp = ps.clone();
    cp.get("g.block1.conv1.b").raw()[0] = 123.0;
    EXPECT_EQ(ps.get("g.block1.conv1.b").values()[0], 0.25);
    EXPECT_TRUE(cp.contains("g.block1.conv1.w#adam_m"));
}

TEST(ParamStore, CloneParamsOnlyDropsState) {
    ParamStore ps = sample_store();
    ParamStore cp = ps.clone(/*params_only=*/true);
    EXPECT_TRUE(cp.contains("g.block1.conv1.w"));
    EXPECT_FALSE(cp.contains("g.block1.conv1.w#adam_m"));
    EXPECT_FALSE(cp.contains("g.block1.cbn1#aux:running_mean"));
}

TEST(ParamStore, EraseContains) {
    ParamStore ps = sample_store();
    ps.erase_contains("#aux:");
    EXPECT_FALSE(ps.contains("g.block1.cbn1#aux:running_mean"));
    EXPECT_TRUE(ps.contains("g.block1.conv1.w#adam_m"));
}

}  // namespace
