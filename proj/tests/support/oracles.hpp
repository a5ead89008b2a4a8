#pragma once

// Reference computations written independently of the library, used as test
// oracles.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace amrevol::oracle {

/// Character 3-gram hashing embedder, straight from its definition.
std::vector<double> hash_embedding(std::string_view text, std::size_t dim);

/// Fraction of the C(n, k) size-k subsets of n samples (c of them correct)
/// that contain a correct sample, by enumerating every subset. n <= 20.
double pass_at_k_by_enumeration(int n, int c, int k);

struct Unit {
  std::string name;
  std::string code;
};

/// Top-level def/class units of Python source by a plain line scan.
std::vector<Unit> split_units(std::string_view code);

/// Exact cosine of two dense vectors in long double.
long double cosine(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace amrevol::oracle
