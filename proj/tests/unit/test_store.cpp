#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "vecfold/error.hpp"
#include "vecfold/store.hpp"

using namespace vecfold;
using oracle::TempDir;

namespace {

std::vector<std::string> make_ids(std::size_t n) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("post-" + std::to_string(i));
    return ids;
}

template<typename Fn>
Errc error_code(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no vecfold::Error thrown";
    return Errc::InvalidArgument;
}

} // namespace

TEST(Header, EncodeDecodeRoundTrip) {
    const store::Header h{123456789012ULL, 768, store::DType::float32};
    const auto bytes = store::encode_header(h);
    EXPECT_EQ(std::memcmp(bytes.data(), "EMBM", 4), 0);
    EXPECT_EQ(bytes[4], 1);
    const auto back = store::decode_header(bytes);
    EXPECT_EQ(back.n, h.n);
    EXPECT_EQ(back.d, h.d);
    for (std::size_t i = 21; i < 32; ++i) EXPECT_EQ(bytes[i], 0);
}

TEST(Header, BadMagicVersionDtype) {
    auto bytes = store::encode_header({1, 4, store::DType::float32});
    auto bad = bytes;
    std::memcpy(bad.data(), "XBMF", 4);
    EXPECT_EQ(error_code([&] { store::decode_header(bad); }), Errc::FormatMismatch);
    bad = bytes;
    bad[4] = 2;
    EXPECT_EQ(error_code([&] { store::decode_header(bad); }), Errc::FormatMismatch);
    bad = bytes;
    bad[20] = 7;
    EXPECT_EQ(error_code([&] { store::decode_header(bad); }), Errc::FormatMismatch);
}

TEST(Writer, FileSizeAfterThreeRows) {
    TempDir dir;
    const auto path = dir / "m.embm";
    auto w = store::MatrixWriter::create(path, 4);
    for (int i = 0; i < 3; ++i) {
        const float row[4] = {1, 2, 3, float(i)};
        w.append_row(row, "p" + std::to_string(i));
    }
    w.close();
    EXPECT_EQ(std::filesystem::file_size(path), 80u);
}

TEST(Writer, RejectsWrongWidthAndClosedHandle) {
    TempDir dir;
    auto w = store::MatrixWriter::create(dir / "m.embm", 4);
    const float five[5] = {};
    EXPECT_EQ(error_code([&] { w.append_row(five, "x"); }), Errc::DimensionMismatch);
    w.close();
    const float four[4] = {};
    EXPECT_EQ(error_code([&] { w.append_row(four, "x"); }), Errc::HandleClosed);
}

TEST(Writer, RejectsDimensionBelowTwo) {
    TempDir dir;
    EXPECT_EQ(error_code([&] { store::MatrixWriter::create(dir / "m.embm", 1); }), Errc::InvalidArgument);
}

TEST(Writer, RejectsIdsWithSeparators) {
    TempDir dir;
    auto w = store::MatrixWriter::create(dir / "m.embm", 2);
    const float row[2] = {1, 2};
    EXPECT_THROW(w.append_row(row, "a\tb"), Error);
    EXPECT_THROW(w.append_row(row, "a\nb"), Error);
}

TEST(Writer, DiskFullIsReported) {
    if (!std::filesystem::exists("/dev/full")) GTEST_SKIP() << "no /dev/full";
    EXPECT_EQ(error_code([&] { store::MatrixWriter::create("/dev/full", 4); }), Errc::DiskFull);
}

TEST(Reader, RowBitIdentical) {
    TempDir dir;
    const auto path = dir / "m.embm";
    const float row[4] = {0.1f, -2.5f, 3.25e-7f, 1e30f};
    {
        auto w = store::MatrixWriter::create(path, 4);
        w.append_row(row, "only");
        w.close();
    }
    const auto r = store::MatrixReader::open(path);
    ASSERT_EQ(r.rows(), 1u);
    EXPECT_EQ(std::memcmp(r.row(0).data(), row, 16), 0);
    const auto copy = r.get_row(0);
    EXPECT_EQ(std::memcmp(copy.data(), row, 16), 0);
    EXPECT_EQ(r.ids(), std::vector<std::string>{"only"});
    EXPECT_EQ(error_code([&] { r.get_row(1); }), Errc::IndexOutOfRange);
}

TEST(Reader, BatchesCoverRowsOnce) {
    TempDir dir;
    const auto path = dir / "m.embm";
    const auto data = oracle::random_matrix(10, 3, 1);
    store::write_matrix(path, FloatView(data, 10, 3), make_ids(10));
    const auto r = store::MatrixReader::open(path);
    const auto batches = r.batches(4);
    ASSERT_EQ(batches.size(), 3u);
    EXPECT_EQ(batches[0].rows.rows(), 4u);
    EXPECT_EQ(batches[1].rows.rows(), 4u);
    EXPECT_EQ(batches[2].rows.rows(), 2u);
    EXPECT_EQ(batches[2].begin, 8u);
}

TEST(Reader, RejectsBadMagicAndTruncation) {
    TempDir dir;
    const auto path = dir / "m.embm";
    const auto data = oracle::random_matrix(5, 4, 2);
    store::write_matrix(path, FloatView(data, 5, 4), make_ids(5));

    auto bytes = oracle::slurp(path);
    {
        std::ofstream out(dir / "bad.embm", std::ios::binary);
        auto bad = bytes;
        bad.replace(0, 4, "XBMF");
        out << bad;
    }
    EXPECT_EQ(error_code([&] { store::MatrixReader::open(dir / "bad.embm"); }), Errc::FormatMismatch);
    {
        std::ofstream out(dir / "short.embm", std::ios::binary);
        out << bytes.substr(0, bytes.size() - 3);
    }
    EXPECT_EQ(error_code([&] { store::MatrixReader::open(dir / "short.embm"); }), Errc::TruncatedFile);
    {
        std::ofstream out(dir / "stub.embm", std::ios::binary);
        out << bytes.substr(0, 10);
    }
    EXPECT_EQ(error_code([&] { store::MatrixReader::open(dir / "stub.embm"); }), Errc::TruncatedFile);
    EXPECT_EQ(error_code([&] { store::MatrixReader::open(dir / "missing.embm"); }), Errc::FileNotReadable);
}

TEST(Resume, DiscardsUncheckpointedTail) {
    TempDir dir;
    const auto path = dir / "m.embm";
    {
        auto w = store::MatrixWriter::create(path, 2);
        const float a[2] = {1, 2};
        w.append_row(a, "a");
        w.flush();
        // Simulate a crash mid-batch: bytes and an id line land after the checkpoint.
    }
    {
        std::ofstream data(path, std::ios::binary | std::ios::app);
        const float junk[2] = {9, 9};
        data.write(reinterpret_cast<const char*>(junk), sizeof(junk));
        std::ofstream ids(store::ids_path(path), std::ios::app);
        ids << "1\tjunk\n";
    }
    auto w = store::MatrixWriter::resume(path);
    EXPECT_EQ(w.committed_rows(), 1u);
    EXPECT_EQ(w.ids(), std::vector<std::string>{"a"});
    const float b[2] = {3, 4};
    w.append_row(b, "b");
    w.close();
    const auto r = store::MatrixReader::open(path);
    ASSERT_EQ(r.rows(), 2u);
    EXPECT_EQ(r.row(1)[0], 3.0f);
    EXPECT_EQ(r.ids(), (std::vector<std::string>{"a", "b"}));
}

TEST(Resume, MissingCommittedRowsIsPartialWrite) {
    TempDir dir;
    const auto path = dir / "m.embm";
    const auto data = oracle::random_matrix(4, 2, 3);
    store::write_matrix(path, FloatView(data, 4, 2), make_ids(4));
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 8);
    EXPECT_EQ(error_code([&] { store::MatrixWriter::resume(path); }), Errc::PartialWriteDetected);
}

TEST(Normalize, UnitRowsAndZeroRow) {
    TempDir dir;
    std::vector<float> data = {3, 4, 0.6f, 0.8f, 1, 0};
    store::write_matrix(dir / "in.embm", FloatView(data, 3, 2), make_ids(3));
    const auto in = store::MatrixReader::open(dir / "in.embm");
    const auto out = store::normalize_rows(in, dir / "out.embm");
    EXPECT_NEAR(out.row(0)[0], 0.6, 1e-7);
    EXPECT_NEAR(out.row(0)[1], 0.8, 1e-7);
    EXPECT_NEAR(out.row(1)[0], 0.6f, 1e-7);
    EXPECT_NEAR(out.row(1)[1], 0.8f, 1e-7);
    EXPECT_EQ(out.ids(), in.ids());

    std::vector<float> zeros(20, 1.0f);
    zeros[14] = zeros[15] = 0.0f;
    store::write_matrix(dir / "z.embm", FloatView(zeros, 10, 2), make_ids(10));
    const auto zin = store::MatrixReader::open(dir / "z.embm");
    try {
        store::normalize_rows(zin, dir / "zout.embm");
        FAIL() << "expected ZeroRow";
    } catch (const ZeroRow& e) {
        EXPECT_EQ(e.index(), 7u);
    }
}

TEST(Ids, DuplicateOrGappedSidecarRejected) {
    TempDir dir;
    const auto path = dir / "m.embm";
    const auto data = oracle::random_matrix(2, 2, 4);
    store::write_matrix(path, FloatView(data, 2, 2), make_ids(2));
    {
        std::ofstream ids(store::ids_path(path));
        ids << "0\ta\n1\ta\n";
    }
    EXPECT_EQ(error_code([&] { store::read_ids(path); }), Errc::FormatMismatch);
    {
        std::ofstream ids(store::ids_path(path));
        ids << "0\ta\n2\tb\n";
    }
    EXPECT_EQ(error_code([&] { store::read_ids(path); }), Errc::FormatMismatch);
}

TEST(RoundTrip, RandomShapesBitIdentical) {
    TempDir dir;
    std::mt19937_64 gen(11);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = gen() % 20;
        const std::uint32_t d = 2 + gen() % 16;
        std::vector<float> data(n * d);
        for (auto& v : data) {
            std::uint32_t bits = static_cast<std::uint32_t>(gen());
            std::memcpy(&v, &bits, 4);
        }
        const auto path = dir / "rt.embm";
        store::write_matrix(path, FloatView(data, n, d), make_ids(n));
        const auto r = store::MatrixReader::open(path);
        ASSERT_EQ(r.rows(), n);
        ASSERT_EQ(r.cols(), d);
        if (n > 0) {
            ASSERT_EQ(std::memcmp(r.view().data().data(), data.data(), data.size() * 4), 0);
        }
    }
}
