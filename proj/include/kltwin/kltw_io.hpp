#pragma once

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "kltwin/dataset.hpp"
#include "kltwin/surrogate.hpp"

namespace kltwin {

// Binary container of named f64 arrays:
//   magic "KLTW", u32 version, then records
//   { u32 name length, name bytes, u32 dtype (0 = little-endian f64),
//     u32 rank, u64 dims[rank], payload }
// with rank-2 payloads laid out column-major.  A JSON manifest listing the
// records is written next to every container ("<file>.json").
inline constexpr std::uint32_t kltw_format_version = 1;

struct KltwRecord {
    std::string name;
    std::vector<Index> dims;  // empty = scalar
    Mat data;                 // scalar 1x1, vector n x 1, matrix rows x cols

    Index element_count() const;
};

class KltwFile {
  public:
    std::uint32_t version = kltw_format_version;

    bool contains(const std::string& name) const;
    const KltwRecord& at(const std::string& name) const;

    void add_scalar(const std::string& name, double value);
    void add_vector(const std::string& name, const Vec& value);
    void add_matrix(const std::string& name, const Mat& value);
    void add_record(KltwRecord record);

    double scalar(const std::string& name) const;
    Vec vector(const std::string& name) const;
    Mat matrix(const std::string& name) const;

    const std::vector<KltwRecord>& records() const { return records_; }

  private:
    std::vector<KltwRecord> records_;
};

// Writes the container plus its JSON manifest through a temporary file, so a
// failed save never leaves a partial artifact behind.
void save_kltw(const std::filesystem::path& path, const KltwFile& file);

// Throws FormatError carrying the byte offset of the first defect: bad magic,
// unsupported version/dtype/rank, oversized name, or truncated payload.
KltwFile load_kltw(const std::filesystem::path& path);

// --- typed artifacts ---------------------------------------------------------

void save_model(const std::filesystem::path& path, const SurrogateModel& model);
SurrogateModel load_model(const std::filesystem::path& path);

void save_dataset(const std::filesystem::path& path, const LinearDataset& data);
void save_dataset(const std::filesystem::path& path, const NonlinearDataset& data);
std::variant<LinearDataset, NonlinearDataset> load_dataset(const std::filesystem::path& path);

} // namespace kltwin
