#include "gantts/audio.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "gantts/rng.hpp"

namespace {

using namespace gantts;

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

TEST(MuLaw, EndpointIdentities) {
    EXPECT_EQ(mulaw(0.0), 0.0);
    EXPECT_DOUBLE_EQ(mulaw(1.0), 1.0);
    EXPECT_DOUBLE_EQ(mulaw(-1.0), -1.0);
    EXPECT_EQ(mulaw_inverse(0.0), 0.0);
    EXPECT_DOUBLE_EQ(mulaw_inverse(1.0), 1.0);
    EXPECT_DOUBLE_EQ(mulaw_inverse(-1.0), -1.0);
}

TEST(MuLaw, EightBitReferenceValue) {
    // mu=255: F(0.5) = ln(1 + 255*0.5)/ln(256)
    const double expected = std::log(128.5) / std::log(256.0);
    EXPECT_NEAR(mulaw(0.5, 255.0), expected, 1e-15);
    EXPECT_NEAR(expected, 0.87566, 5e-6);
}

TEST(MuLaw, RoundtripOnDenseGrid) {
    const int n = 10'000;
    double worst = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double x = -1.0 + 2.0 * i / n;
        worst = std::max(worst, std::abs(mulaw_inverse(mulaw(x)) - x));
    }
    EXPECT_LT(worst, 1e-9);
}

TEST(MuLaw, StrictlyIncreasingAndOdd) {
    const int n = 4001;
    double prev = -2.0;
    for (int i = 0; i < n; ++i) {
        const double x = -1.0 + 2.0 * i / (n - 1);
        const double y = mulaw(x);
        EXPECT_GT(y, prev);
        EXPECT_DOUBLE_EQ(mulaw(-x), -y);
        prev = y;
    }
}

TEST(MuLaw, RejectsOutOfRange) {
    EXPECT_THROW(mulaw(1.001), std::exception);
    EXPECT_THROW(mulaw(-1.5), std::exception);
    EXPECT_THROW(mulaw_inverse(1.001), std::exception);
}

TEST(Wav, SilenceRoundtripExact) {
    const std::string path = tmp_path("gantts_silence.wav");
    WavClip clip;
    clip.sample_rate = 24000;
    clip.samples.assign(480, 0.0);
    write_wav(path, clip);
    WavClip back = read_wav(path);
    EXPECT_EQ(back.sample_rate, 24000);
    ASSERT_EQ(back.samples.size(), clip.samples.size());
    for (double v : back.samples) EXPECT_EQ(v, 0.0);
    std::filesystem::remove(path);
}

TEST(Wav, FullScaleMapsToPcmExtremes) {
    EXPECT_EQ(pcm16_of(1.0), 32767);
    EXPECT_EQ(pcm16_of(-1.0), -32767);
    EXPECT_EQ(pcm16_of(2.0), 32767);  // clamp
    EXPECT_EQ(pcm16_of(0.0), 0);
}

TEST(Wav, RandomRoundtripAtPcmResolution) {
    const std::string path = tmp_path("gantts_random.wav");
    Rng rng(5, 0);
    WavClip clip;
    clip.sample_rate = 48000;
    for (int i = 0; i < 1000; ++i) clip.samples.push_back(2.0 * rng.next_double() - 1.0);
    write_wav(path, clip);
    WavClip back = read_wav(path);
    EXPECT_EQ(back.sample_rate, 48000);
    ASSERT_EQ(back.samples.size(), clip.samples.size());
    for (size_t i = 0; i < clip.samples.size(); ++i) {
        const double quantized = pcm16_of(clip.samples[i]) / 32767.0;
        EXPECT_DOUBLE_EQ(back.samples[i], quantized);
        EXPECT_NEAR(back.samples[i], clip.samples[i], 1.0 / 32767.0);
    }
    // Writing the read-back clip reproduces the file byte-for-byte.
    const std::string path2 = tmp_path("gantts_random2.wav");
    write_wav(path2, back);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    EXPECT_EQ(b1, b2);
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST(Wav, RejectsMalformedHeader) {
    const std::string path = tmp_path("gantts_bad.wav");
    std::ofstream f(path, std::ios::binary);
    f << "RIFFxxxxNOPE" << std::string(40, '\0');
    f.close();
    EXPECT_THROW(read_wav(path), std::exception);
    EXPECT_THROW(read_wav(tmp_path("gantts_missing_file.wav")), std::exception);
    std::filesystem::remove(path);
}

TEST(MatrixFile, RoundtripExactAndMagicChecked) {
    const std::string path = tmp_path("gantts_mat.bin");
    const char magic[4] = {'G', 'T', 'X', '1'};
    std::vector<double> data;
    Rng rng(9, 1);
    for (int i = 0; i < 6 * 4; ++i) data.push_back(rng.next_normal());
    write_matrix(path, magic, 6, 4, data.data());
    i64 rows = 0, cols = 0;
    std::vector<double> back = read_matrix(path, magic, &rows, &cols);
    EXPECT_EQ(rows, 6);
    EXPECT_EQ(cols, 4);
    ASSERT_EQ(back.size(), data.size());
    for (size_t i = 0; i < data.size(); ++i) EXPECT_EQ(back[i], data[i]);
    const char wrong[4] = {'G', 'T', 'X', '2'};
    EXPECT_THROW(read_matrix(path, wrong, &rows, &cols), std::exception);
    std::filesystem::remove(path);
}

}  // namespace
