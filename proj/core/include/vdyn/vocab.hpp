#pragma once

#include <string>
#include <vector>

namespace vdyn {

// Token ids: 0 = BOS, 1 = EOS, residues from 2 in the order given. The
// canonical protein alphabet is the 20 amino acids in alphabetical
// one-letter order.
class Vocabulary {
 public:
  Vocabulary() = default;
  static Vocabulary amino_acid();
  static Vocabulary from_residues(const std::string& residues);

  int size() const { return static_cast<int>(residues_.size()) + 2; }
  static constexpr int bos() { return 0; }
  static constexpr int eos() { return 1; }
  int first_residue() const { return 2; }

  bool is_residue(int id) const { return id >= 2 && id < size(); }
  int id_of(char c) const;    // residue char -> id
  char char_of(int id) const; // residue id -> char

  std::vector<int> encode(const std::string& seq) const;  // residues only
  std::string decode(const std::vector<int>& ids) const;

  const std::string& residues() const { return residues_; }

 private:
  explicit Vocabulary(std::string residues);
  std::string residues_;
  int index_[256] = {};
};

}  // namespace vdyn
