#ifndef VECFOLD_TEST_ORACLES_HPP
#define VECFOLD_TEST_ORACLES_HPP

// Reference implementations used as test oracles. None of these call into
// the library, so agreement between the two is meaningful.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace oracle {

/// Unique scratch directory removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(std::string_view name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

struct Blobs {
    std::size_t n = 0;
    std::size_t d = 0;
    std::vector<float> data;
    std::vector<std::uint32_t> labels;
    std::vector<std::vector<double>> centers;
};

/// Gaussian blobs, point i in blob i % k, centers pairwise at least `min_sep` apart.
Blobs make_blobs(std::size_t n, std::size_t d, std::size_t k, double sigma, double min_sep, std::uint64_t seed,
                 double box = 20.0);

/// Uniform [-1, 1) floats.
std::vector<float> random_matrix(std::size_t n, std::size_t d, std::uint64_t seed);

/// Adjusted Rand index from the pair-counting contingency table.
double adjusted_rand_index(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b);

double squared_distance(std::span<const float> x, std::span<const double> c);

/// argmin over centroids with a strict `<` scan (lowest index wins ties).
std::vector<std::uint32_t> brute_assign(const std::vector<float>& data, std::size_t d,
                                        const std::vector<double>& centroids, std::size_t k);

double brute_inertia(const std::vector<float>& data, std::size_t d, const std::vector<double>& centroids,
                     std::span<const std::uint32_t> labels);

/// The k nearest other points of each point by full sort of all pairwise distances (ties: lower index).
std::vector<std::vector<std::size_t>> brute_knn(const std::vector<double>& data, std::size_t d, std::size_t k);

/// Trustworthiness of a low-dimensional embedding at neighborhood size k.
double trustworthiness(const std::vector<double>& high, std::size_t d_high, const std::vector<double>& low,
                       std::size_t d_low, std::size_t k);

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
std::vector<double> jacobi_eigenvalues(std::vector<double> a, std::size_t n);

/// Sample covariance (n - 1 denominator), computed with two explicit passes.
std::vector<double> covariance(const std::vector<float>& data, std::size_t n, std::size_t d);

/// Feature-hashing reference: FNV-1a over seed bytes and token, murmur3 fmix64 finish.
std::uint64_t reference_token_hash(std::string_view token, std::uint64_t seed);

/// Lowercased whitespace tokens, hashed into signed buckets, mean-pooled and L2 normalized.
std::vector<double> reference_stub_vector(std::string_view text, std::size_t dim, std::uint64_t seed);

double cosine(std::span<const double> a, std::span<const double> b);

/// Read a whole file.
std::string slurp(const std::filesystem::path& path);

} // namespace oracle

#endif
