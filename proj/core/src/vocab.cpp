#include "vdyn/vocab.hpp"

#include "vdyn/errors.hpp"

namespace vdyn {

namespace {
const char* kCanonical = "ACDEFGHIKLMNPQRSTVWY";
}

Vocabulary::Vocabulary(std::string residues) : residues_(std::move(residues)) {
  for (int& v : index_) v = -1;
  for (std::size_t i = 0; i < residues_.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(residues_[i]);
    if (index_[c] != -1)
      throw data_error(std::string("vocabulary: duplicate residue '") + residues_[i] + "'");
    index_[c] = static_cast<int>(i) + 2;
  }
}

Vocabulary Vocabulary::amino_acid() { return Vocabulary(kCanonical); }

Vocabulary Vocabulary::from_residues(const std::string& residues) {
  if (residues.empty()) throw data_error("vocabulary: empty residue set");
  return Vocabulary(residues);
}

int Vocabulary::id_of(char c) const {
  const int id = index_[static_cast<unsigned char>(c)];
  if (id < 0)
    throw data_error(std::string("unknown residue '") + c + "'");
  return id;
}

char Vocabulary::char_of(int id) const {
  if (!is_residue(id))
    throw data_error("token id " + std::to_string(id) + " is not a residue");
  return residues_[static_cast<std::size_t>(id - 2)];
}

std::vector<int> Vocabulary::encode(const std::string& seq) const {
  std::vector<int> out;
  out.reserve(seq.size());
  for (char c : seq) out.push_back(id_of(c));
  return out;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(char_of(id));
  return out;
}

}  // namespace vdyn
