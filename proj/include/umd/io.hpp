#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "umd/detector.hpp"

namespace umd {

/// File could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Json = nlohmann::ordered_json;

// Binary layouts, all little-endian:
//   model:   "UMD" version  u32 K u32 d u32 layers  { u32 out u32 in u8 act  f64[out*in] f64[out] }*
//   dataset: "UMDD" version u32 K u32 d u64 n  { f64[d] u16 label }*
// The model version byte is the ASCII digit, so version 1 files start "UMD1".
inline constexpr std::uint8_t kModelFormatVersion = '1';
inline constexpr std::uint8_t kDatasetFormatVersion = 1;

void write_model(std::ostream& out, const Network& net);
Network read_model(std::istream& in);
void save_model(const std::filesystem::path& path, const Network& net);
Network load_model(const std::filesystem::path& path);

void write_dataset(std::ostream& out, const LabeledDataset& data);
LabeledDataset read_dataset(std::istream& in);
void save_dataset(const std::filesystem::path& path, const LabeledDataset& data);
LabeledDataset load_dataset(const std::filesystem::path& path);

Json to_json(const ClassPair& pair);
ClassPair pair_from_json(const Json& j);
Json to_json(const TriggerSpec& trigger);
TriggerSpec trigger_from_json(const Json& j);
Json to_json(const AttackSpec& attack);
AttackSpec attack_from_json(const Json& j);

/// Stable key order; non-finite numbers are written as the strings "inf",
/// "-inf" and "nan" so the text stays valid JSON.
Json to_json(const DetectionReport& report);
DetectionReport report_from_json(const Json& j);

Json to_json(const TRMatrix& tr);
TRMatrix tr_from_json(const Json& j);

/// One header row of pair labels; NaN diagonal written as empty cells.
std::string tr_to_csv(const TRMatrix& tr, bool row_normalize = false);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
Json load_json(const std::filesystem::path& path);
void save_json(const std::filesystem::path& path, const Json& j);

}  // namespace umd
