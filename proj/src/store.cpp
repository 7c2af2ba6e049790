#include "vecfold/store.hpp"

#include <bit>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_set>
#include <utility>

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

static_assert(std::endian::native == std::endian::little,
              "EMBM rows are served zero-copy and require a little-endian host");

namespace vecfold::store {

namespace {

constexpr unsigned char magic[4] = {'E', 'M', 'B', 'M'};

template<typename T>
void put_le(unsigned char* dst, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        dst[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
    }
}

template<typename T>
T get_le(const unsigned char* src) {
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        value |= static_cast<T>(src[i]) << (8 * i);
    }
    return value;
}

[[noreturn]] void throw_write_error(const std::filesystem::path& path) {
    if (errno == ENOSPC) {
        throw Error(Errc::DiskFull, "no space left writing " + path.string());
    }
    throw Error(Errc::UnwritablePath, "write failed for " + path.string() + ": " + std::strerror(errno));
}

void checked_write(std::FILE* f, const void* data, std::size_t bytes, const std::filesystem::path& path) {
    if (bytes == 0) {
        return;
    }
    errno = 0;
    if (std::fwrite(data, 1, bytes, f) != bytes) {
        throw_write_error(path);
    }
}

void checked_flush(std::FILE* f, const std::filesystem::path& path) {
    errno = 0;
    if (std::fflush(f) != 0) {
        throw_write_error(path);
    }
}

void checked_seek(std::FILE* f, std::uint64_t offset, const std::filesystem::path& path) {
    if (fseeko(f, static_cast<off_t>(offset), SEEK_SET) != 0) {
        throw_write_error(path);
    }
}

std::vector<std::string> read_id_lines(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(Errc::FileNotReadable, "cannot read id sidecar " + path.string());
    }
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        lines.push_back(std::move(line));
    }
    return lines;
}

std::string parse_id_line(const std::string& line, std::size_t expected_row, const std::filesystem::path& path) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab + 1 >= line.size()) {
        throw Error(Errc::FormatMismatch, path.string() + ": malformed id line " + std::to_string(expected_row));
    }
    if (line.substr(0, tab) != std::to_string(expected_row)) {
        throw Error(Errc::FormatMismatch, path.string() + ": rows are not contiguous at " + std::to_string(expected_row));
    }
    return line.substr(tab + 1);
}

} // namespace

std::array<unsigned char, header_size> encode_header(const Header& header) {
    std::array<unsigned char, header_size> out{};
    std::memcpy(out.data(), magic, 4);
    put_le<std::uint32_t>(out.data() + 4, format_version);
    put_le<std::uint64_t>(out.data() + 8, header.n);
    put_le<std::uint32_t>(out.data() + 16, header.d);
    out[20] = static_cast<unsigned char>(header.dtype);
    return out;
}

Header decode_header(std::span<const unsigned char, header_size> bytes) {
    if (std::memcmp(bytes.data(), magic, 4) != 0) {
        throw Error(Errc::FormatMismatch, "bad magic, expected EMBM");
    }
    const auto version = get_le<std::uint32_t>(bytes.data() + 4);
    if (version != format_version) {
        throw Error(Errc::FormatMismatch, "unsupported EMBM version " + std::to_string(version));
    }
    if (bytes[20] != static_cast<unsigned char>(DType::float32)) {
        throw Error(Errc::FormatMismatch, "unsupported dtype code " + std::to_string(bytes[20]));
    }
    Header header;
    header.n = get_le<std::uint64_t>(bytes.data() + 8);
    header.d = get_le<std::uint32_t>(bytes.data() + 16);
    header.dtype = DType::float32;
    return header;
}

std::uint64_t expected_file_size(const Header& header) {
    return header_size + header.n * static_cast<std::uint64_t>(header.d) * sizeof(float);
}

std::filesystem::path ids_path(const std::filesystem::path& matrix_path) {
    auto p = matrix_path;
    p += ".ids";
    return p;
}

std::vector<std::string> read_ids(const std::filesystem::path& matrix_path) {
    const auto path = ids_path(matrix_path);
    auto lines = read_id_lines(path);
    std::vector<std::string> ids;
    ids.reserve(lines.size());
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        auto id = parse_id_line(lines[i], i, path);
        if (!seen.insert(id).second) {
            throw Error(Errc::FormatMismatch, path.string() + ": duplicate id '" + id + "'");
        }
        ids.push_back(std::move(id));
    }
    return ids;
}

/*********************
 *** MatrixWriter ****
 *********************/

MatrixWriter MatrixWriter::create(const std::filesystem::path& path, std::uint32_t d, DType dtype) {
    if (d < 2) {
        throw Error(Errc::InvalidArgument, "matrix dimension must be at least 2");
    }
    MatrixWriter w;
    w.path_ = path;
    w.d_ = d;
    w.dtype_ = dtype;
    w.data_ = std::fopen(path.c_str(), "w+b");
    if (!w.data_) {
        throw Error(Errc::UnwritablePath, "cannot create " + path.string() + ": " + std::strerror(errno));
    }
    const auto header = encode_header(Header{0, d, dtype});
    checked_write(w.data_, header.data(), header.size(), path);
    checked_flush(w.data_, path);
    w.id_file_ = std::fopen(ids_path(path).c_str(), "wb");
    if (!w.id_file_) {
        throw Error(Errc::UnwritablePath, "cannot create " + ids_path(path).string());
    }
    return w;
}

MatrixWriter MatrixWriter::resume(const std::filesystem::path& path) {
    std::error_code ec;
    const auto size = std::filesystem::file_size(path, ec);
    if (ec) {
        throw Error(Errc::FileNotReadable, "cannot stat " + path.string());
    }
    if (size < header_size) {
        throw Error(Errc::PartialWriteDetected, path.string() + ": file shorter than its header");
    }

    std::array<unsigned char, header_size> bytes{};
    {
        std::ifstream in(path, std::ios::binary);
        in.read(reinterpret_cast<char*>(bytes.data()), header_size);
    }
    const Header header = decode_header(bytes);
    const auto expected = expected_file_size(header);
    if (size < expected) {
        throw Error(Errc::PartialWriteDetected,
                    path.string() + ": holds fewer rows than its header records");
    }
    if (size > expected) {
        std::filesystem::resize_file(path, expected);
    }

    auto lines = std::filesystem::exists(ids_path(path)) ? read_id_lines(ids_path(path)) : std::vector<std::string>{};
    if (lines.size() < header.n) {
        throw Error(Errc::PartialWriteDetected,
                    ids_path(path).string() + ": fewer ids than checkpointed rows");
    }
    lines.resize(header.n);

    MatrixWriter w;
    w.path_ = path;
    w.d_ = header.d;
    w.dtype_ = header.dtype;
    w.committed_ = header.n;
    w.ids_.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
        w.ids_.push_back(parse_id_line(lines[i], i, ids_path(path)));
    }

    // Rewrite the sidecar so trailing uncommitted lines are dropped.
    w.id_file_ = std::fopen(ids_path(path).c_str(), "wb");
    if (!w.id_file_) {
        throw Error(Errc::UnwritablePath, "cannot rewrite " + ids_path(path).string());
    }
    for (std::size_t i = 0; i < w.ids_.size(); ++i) {
        const auto line = std::to_string(i) + "\t" + w.ids_[i] + "\n";
        checked_write(w.id_file_, line.data(), line.size(), ids_path(path));
    }
    checked_flush(w.id_file_, ids_path(path));

    w.data_ = std::fopen(path.c_str(), "r+b");
    if (!w.data_) {
        throw Error(Errc::UnwritablePath, "cannot reopen " + path.string());
    }
    return w;
}

MatrixWriter::MatrixWriter(MatrixWriter&& other) noexcept :
    path_(std::move(other.path_)), data_(std::exchange(other.data_, nullptr)),
    id_file_(std::exchange(other.id_file_, nullptr)), d_(other.d_), dtype_(other.dtype_),
    committed_(other.committed_), pending_values_(std::move(other.pending_values_)),
    pending_ids_(std::move(other.pending_ids_)), ids_(std::move(other.ids_)) {}

MatrixWriter& MatrixWriter::operator=(MatrixWriter&& other) noexcept {
    if (this != &other) {
        release();
        path_ = std::move(other.path_);
        data_ = std::exchange(other.data_, nullptr);
        id_file_ = std::exchange(other.id_file_, nullptr);
        d_ = other.d_;
        dtype_ = other.dtype_;
        committed_ = other.committed_;
        pending_values_ = std::move(other.pending_values_);
        pending_ids_ = std::move(other.pending_ids_);
        ids_ = std::move(other.ids_);
    }
    return *this;
}

MatrixWriter::~MatrixWriter() {
    try {
        close();
    } catch (...) {
        release();
    }
}

void MatrixWriter::release() noexcept {
    if (data_) {
        std::fclose(data_);
        data_ = nullptr;
    }
    if (id_file_) {
        std::fclose(id_file_);
        id_file_ = nullptr;
    }
}

void MatrixWriter::append_row(std::span<const float> values, std::string_view post_id) {
    if (!data_) {
        throw Error(Errc::HandleClosed, "append to closed matrix " + path_.string());
    }
    if (values.size() != d_) {
        throw Error(Errc::DimensionMismatch, "row of length " + std::to_string(values.size()) +
                                                 " appended to matrix with d=" + std::to_string(d_));
    }
    if (post_id.empty() || post_id.find_first_of("\t\r\n") != std::string_view::npos) {
        throw Error(Errc::InvalidArgument, "post id must be non-empty and free of tabs and newlines");
    }
    pending_values_.insert(pending_values_.end(), values.begin(), values.end());
    pending_ids_.emplace_back(post_id);
}

void MatrixWriter::flush() {
    if (!data_) {
        throw Error(Errc::HandleClosed, "flush of closed matrix " + path_.string());
    }
    if (pending_ids_.empty()) {
        return;
    }
    checked_seek(data_, expected_file_size(Header{committed_, d_, dtype_}), path_);
    checked_write(data_, pending_values_.data(), pending_values_.size() * sizeof(float), path_);
    checked_flush(data_, path_);

    std::string lines;
    for (std::size_t i = 0; i < pending_ids_.size(); ++i) {
        lines += std::to_string(committed_ + i);
        lines += '\t';
        lines += pending_ids_[i];
        lines += '\n';
    }
    checked_write(id_file_, lines.data(), lines.size(), ids_path(path_));
    checked_flush(id_file_, ids_path(path_));

    const std::uint64_t new_n = committed_ + pending_ids_.size();
    const auto header = encode_header(Header{new_n, d_, dtype_});
    checked_seek(data_, 0, path_);
    checked_write(data_, header.data(), header.size(), path_);
    checked_flush(data_, path_);

    committed_ = new_n;
    for (auto& id : pending_ids_) {
        ids_.push_back(std::move(id));
    }
    pending_ids_.clear();
    pending_values_.clear();
}

void MatrixWriter::close() {
    if (!data_) {
        return;
    }
    flush();
    release();
}

/*********************
 *** MatrixReader ****
 *********************/

MatrixReader MatrixReader::open(const std::filesystem::path& path) {
    const int fd = ::open(path.c_str(), O_RDONLY);
    if (fd < 0) {
        throw Error(Errc::FileNotReadable, "cannot open " + path.string() + ": " + std::strerror(errno));
    }
    struct stat st {};
    if (::fstat(fd, &st) != 0) {
        ::close(fd);
        throw Error(Errc::FileNotReadable, "cannot stat " + path.string());
    }
    const auto size = static_cast<std::uint64_t>(st.st_size);

    std::array<unsigned char, header_size> bytes{};
    const auto got = ::pread(fd, bytes.data(), header_size, 0);
    if (got >= 4 && std::memcmp(bytes.data(), magic, 4) != 0) {
        ::close(fd);
        throw Error(Errc::FormatMismatch, path.string() + ": bad magic, expected EMBM");
    }
    if (got < static_cast<ssize_t>(header_size)) {
        ::close(fd);
        throw Error(Errc::TruncatedFile, path.string() + ": shorter than the 32-byte header");
    }

    MatrixReader r;
    r.path_ = path;
    try {
        r.header_ = decode_header(bytes);
    } catch (Error& e) {
        ::close(fd);
        e.add_context(path.string());
        throw;
    }
    if (size != expected_file_size(r.header_)) {
        ::close(fd);
        throw Error(Errc::TruncatedFile, path.string() + ": size " + std::to_string(size) +
                                             " inconsistent with header (n=" + std::to_string(r.header_.n) +
                                             ", d=" + std::to_string(r.header_.d) + ")");
    }

    r.mapped_size_ = static_cast<std::size_t>(size);
    void* p = ::mmap(nullptr, r.mapped_size_, PROT_READ, MAP_SHARED, fd, 0);
    ::close(fd);
    if (p == MAP_FAILED) {
        throw Error(Errc::FileNotReadable, "cannot map " + path.string());
    }
    r.mapping_ = p;
    return r;
}

MatrixReader::MatrixReader(MatrixReader&& other) noexcept :
    path_(std::move(other.path_)), header_(other.header_),
    mapping_(std::exchange(other.mapping_, nullptr)), mapped_size_(std::exchange(other.mapped_size_, 0)) {}

MatrixReader& MatrixReader::operator=(MatrixReader&& other) noexcept {
    if (this != &other) {
        release();
        path_ = std::move(other.path_);
        header_ = other.header_;
        mapping_ = std::exchange(other.mapping_, nullptr);
        mapped_size_ = std::exchange(other.mapped_size_, 0);
    }
    return *this;
}

MatrixReader::~MatrixReader() { release(); }

void MatrixReader::release() noexcept {
    if (mapping_) {
        ::munmap(mapping_, mapped_size_);
        mapping_ = nullptr;
    }
}

FloatView MatrixReader::view() const {
    const auto* base = static_cast<const unsigned char*>(mapping_) + header_size;
    const std::size_t count = rows() * cols();
    return FloatView(std::span<const float>(reinterpret_cast<const float*>(base), count), rows(), cols());
}

std::vector<float> MatrixReader::get_row(std::size_t i) const {
    if (i >= rows()) {
        throw Error(Errc::IndexOutOfRange, "row " + std::to_string(i) + " out of range for n=" + std::to_string(rows()));
    }
    auto r = row(i);
    return std::vector<float>(r.begin(), r.end());
}

std::vector<MatrixReader::Batch> MatrixReader::batches(std::size_t batch_size) const {
    if (batch_size == 0) {
        throw Error(Errc::InvalidArgument, "batch size must be positive");
    }
    std::vector<Batch> out;
    const auto all = view();
    for (std::size_t begin = 0; begin < rows(); begin += batch_size) {
        const std::size_t end = std::min(rows(), begin + batch_size);
        out.push_back(Batch{begin, all.block(begin, end)});
    }
    return out;
}

void write_matrix(const std::filesystem::path& path, FloatView matrix, std::span<const std::string> ids) {
    if (ids.size() != matrix.rows()) {
        throw Error(Errc::LengthMismatch, "id count does not match row count");
    }
    auto writer = MatrixWriter::create(path, static_cast<std::uint32_t>(matrix.cols()));
    for (std::size_t i = 0; i < matrix.rows(); ++i) {
        writer.append_row(matrix.row(i), ids[i]);
    }
    writer.close();
}

MatrixReader normalize_rows(const MatrixReader& in, const std::filesystem::path& out_path) {
    const auto ids = in.ids();
    auto writer = MatrixWriter::create(out_path, static_cast<std::uint32_t>(in.cols()));
    std::vector<float> scaled(in.cols());
    for (std::size_t i = 0; i < in.rows(); ++i) {
        auto r = in.row(i);
        double sq = 0.0;
        for (float v : r) {
            sq += static_cast<double>(v) * v;
        }
        if (sq == 0.0) {
            throw ZeroRow(i);
        }
        const double norm = std::sqrt(sq);
        for (std::size_t j = 0; j < r.size(); ++j) {
            scaled[j] = static_cast<float>(r[j] / norm);
        }
        writer.append_row(scaled, ids[i]);
        if ((i + 1) % 4096 == 0) {
            writer.flush();
        }
    }
    writer.close();
    return MatrixReader::open(out_path);
}

} // namespace vecfold::store
