#pragma once

#include <speccorr/correspondence.hpp>
#include <speccorr/errors.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace speccorr::cli {

/// Bad arguments or unusable inputs; exit code 2.
class UsageError : public Error
{
public:
    using Error::Error;
};

/// Filesystem failures while reading or writing artifacts; exit code 2.
class IoError : public Error
{
public:
    using Error::Error;
};

enum ExitCode : int { kSuccess = 0, kAlgorithmFailure = 1, kUsageFailure = 2 };

/// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

struct CorrespondenceHeader
{
    int num_y = 0;
    std::uint64_t hash_x = 0;
    std::uint64_t hash_y = 0;
    std::uint64_t seed = 0;
    std::string config; ///< config_to_text snapshot, one `key = value` per line
};

/// Text file: `#` header lines (sizes, hashes, seed, stage, config), then one `x y` line per domain
/// vertex in ascending x.
void save_correspondence(const Correspondence& corr, const CorrespondenceHeader& header, const std::filesystem::path& path);

struct LoadedCorrespondence
{
    Correspondence map;
    CorrespondenceHeader header;
};

LoadedCorrespondence load_correspondence(const std::filesystem::path& path);

/// --cache-dir wins, then SPECCORR_CACHE, then ".speccorr-cache".
std::filesystem::path resolve_cache_dir(const std::optional<std::string>& flag);

std::filesystem::path spectrum_cache_path(const std::filesystem::path& dir, std::uint64_t hash, int n_eigs);

/// Loads the cached basis when present and valid, otherwise computes and stores it. Reports
/// "cache hit" or a recompute warning on `log`.
SpectralBasis cached_spectrum(
    const TriangleMesh& mesh,
    int n_eigs,
    const std::optional<std::filesystem::path>& cache_dir,
    std::ostream& log);

} // namespace speccorr::cli
