#ifndef VECFOLD_STORE_HPP
#define VECFOLD_STORE_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vecfold/matrix.hpp"

/**
 * @file store.hpp
 *
 * @brief EMBM embedding-matrix files: a 32-byte header followed by n*d
 * little-endian float32 values, row-major, with a `<path>.ids` sidecar
 * holding `row_index<TAB>post_id` lines.
 *
 * Header layout:
 *
 * | bytes | content                      |
 * |-------|------------------------------|
 * | 0-3   | magic "EMBM"                 |
 * | 4-7   | version, u32 LE (= 1)        |
 * | 8-15  | n, u64 LE                    |
 * | 16-19 | d, u32 LE                    |
 * | 20    | dtype, u8 (0 = float32 LE)   |
 * | 21-31 | zero                         |
 */

namespace vecfold::store {

inline constexpr std::size_t header_size = 32;
inline constexpr std::uint32_t format_version = 1;

enum class DType : std::uint8_t { float32 = 0 };

struct Header {
    std::uint64_t n = 0;
    std::uint32_t d = 0;
    DType dtype = DType::float32;
};

std::array<unsigned char, header_size> encode_header(const Header& header);

/// Throws FormatMismatch on bad magic, version or dtype.
Header decode_header(std::span<const unsigned char, header_size> bytes);

/// Expected file size for a header.
std::uint64_t expected_file_size(const Header& header);

std::filesystem::path ids_path(const std::filesystem::path& matrix_path);

/// Read a sidecar id index. Rows must be contiguous from 0 and ids unique.
std::vector<std::string> read_ids(const std::filesystem::path& matrix_path);

/**
 * @brief Single-writer appender for an EMBM file.
 *
 * Rows are buffered until `flush()`, which writes the row data, then the id
 * lines, then the header row count. A crash between flushes therefore leaves
 * the header pointing at the last complete checkpoint, which `resume()`
 * recovers from.
 */
class MatrixWriter {
public:
    static MatrixWriter create(const std::filesystem::path& path, std::uint32_t d,
                               DType dtype = DType::float32);

    /**
     * Reopen an existing file for appending after its last checkpoint.
     * Bytes or id lines beyond the header's row count are discarded.
     * Throws PartialWriteDetected when the file holds fewer rows or ids than
     * its header claims.
     */
    static MatrixWriter resume(const std::filesystem::path& path);

    MatrixWriter(MatrixWriter&& other) noexcept;
    MatrixWriter& operator=(MatrixWriter&& other) noexcept;
    MatrixWriter(const MatrixWriter&) = delete;
    MatrixWriter& operator=(const MatrixWriter&) = delete;
    ~MatrixWriter();

    void append_row(std::span<const float> values, std::string_view post_id);
    void flush();
    void close();

    bool is_open() const { return data_ != nullptr; }
    std::uint32_t dim() const { return d_; }
    std::uint64_t committed_rows() const { return committed_; }
    std::uint64_t rows() const { return committed_ + pending_ids_.size(); }

    /// Ids of committed rows (populated by `resume()` and maintained on flush).
    const std::vector<std::string>& ids() const { return ids_; }

private:
    MatrixWriter() = default;
    void release() noexcept;

    std::filesystem::path path_;
    std::FILE* data_ = nullptr;
    std::FILE* id_file_ = nullptr;
    std::uint32_t d_ = 0;
    DType dtype_ = DType::float32;
    std::uint64_t committed_ = 0;
    std::vector<float> pending_values_;
    std::vector<std::string> pending_ids_;
    std::vector<std::string> ids_;
};

/**
 * @brief Read-only memory-mapped EMBM file.
 *
 * Rows are served straight out of the mapping, so opening a multi-gigabyte
 * matrix costs no resident memory until rows are touched.
 */
class MatrixReader {
public:
    /// Throws FileNotReadable, FormatMismatch or TruncatedFile.
    static MatrixReader open(const std::filesystem::path& path);

    MatrixReader(MatrixReader&& other) noexcept;
    MatrixReader& operator=(MatrixReader&& other) noexcept;
    MatrixReader(const MatrixReader&) = delete;
    MatrixReader& operator=(const MatrixReader&) = delete;
    ~MatrixReader();

    std::size_t rows() const { return static_cast<std::size_t>(header_.n); }
    std::size_t cols() const { return header_.d; }
    const Header& header() const { return header_; }
    const std::filesystem::path& path() const { return path_; }

    /// Zero-copy row view, unchecked.
    std::span<const float> row(std::size_t i) const { return view().row(i); }

    /// Copy of row i. Throws IndexOutOfRange.
    std::vector<float> get_row(std::size_t i) const;

    FloatView view() const;

    struct Batch {
        std::size_t begin;
        FloatView rows;
    };

    /// Contiguous blocks covering rows [0, n) exactly once, in order.
    std::vector<Batch> batches(std::size_t batch_size) const;

    std::vector<std::string> ids() const { return read_ids(path_); }

private:
    MatrixReader() = default;
    void release() noexcept;

    std::filesystem::path path_;
    Header header_;
    void* mapping_ = nullptr;
    std::size_t mapped_size_ = 0;
};

/// Write a whole matrix and its sidecar in one go.
void write_matrix(const std::filesystem::path& path, FloatView matrix,
                  std::span<const std::string> ids);

/**
 * Write a copy of `in` with every row scaled to unit L2 norm.
 * Norms are accumulated in double. Throws ZeroRow for the first all-zero row.
 */
MatrixReader normalize_rows(const MatrixReader& in, const std::filesystem::path& out_path);

} // namespace vecfold::store

#endif
