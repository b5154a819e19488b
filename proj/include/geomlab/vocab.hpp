#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "geomlab/common.hpp"

namespace geomlab {

// Token vocabulary: special tokens, base caption words, concept tokens and one
// location token per grid cell. Ids are contiguous in that order, so a model
// embedding sized to base_size() covers exactly the caption-grammar tokens and
// concept/location rows can be appended later without renumbering.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kEmpty = 1;

  Vocab() = default;

  static const std::vector<std::string>& base_words();

  // Location tokens cover a grid_w x grid_h bin grid (0-based cell indices).
  static Vocab build(int grid_w, int grid_h,
                     const std::vector<std::string>& concepts = {"qr", "watermark", "text"});

  int size() const { return static_cast<int>(tokens_.size()); }
  int base_size() const { return base_size_; }
  int grid_w() const { return grid_w_; }
  int grid_h() const { return grid_h_; }

  int id(const std::string& token) const;
  const std::string& token(int id) const;

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  std::vector<int> encode_text(const std::string& space_separated) const;
  std::string decode_text(const std::vector<int>& ids) const;

  bool is_location(int id) const { return id >= loc_start_ && id < size(); }
  bool is_concept(int id) const { return id >= concept_start_ && id < loc_start_; }

  int concept_id(const std::string& name) const;
  int location_id(int m, int n) const;
  void location_cell(int id, int& m, int& n) const;

  void save(const std::string& path) const;  // "token<TAB>id" lines
  static Vocab load(const std::string& path);

 private:
  void index_tokens();

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  int base_size_ = 0;
  int concept_start_ = 0;
  int loc_start_ = 0;
  int grid_w_ = 0;
  int grid_h_ = 0;
};

}  // namespace geomlab
