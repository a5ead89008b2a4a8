#include "oracles.hpp"

#include <cctype>
#include <cmath>
#include <map>
#include <stdexcept>

namespace amrevol::oracle {

namespace {

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

// Splits valid UTF-8 into the byte strings of its code points.
std::vector<std::string> code_points(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (lead >= 0xF0) {
      len = 4;
    } else if (lead >= 0xE0) {
      len = 3;
    } else if (lead >= 0xC0) {
      len = 2;
    }
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

}  // namespace

std::vector<double> hash_embedding(std::string_view text, std::size_t dim) {
  std::vector<double> v(dim, 0.0);
  auto cps = code_points(text);
  if (cps.size() < 3) {
    v[fnv1a(text) % dim] += 1.0;
  } else {
    for (std::size_t i = 0; i + 2 < cps.size(); ++i) {
      v[fnv1a(cps[i] + cps[i + 1] + cps[i + 2]) % dim] += 1.0;
    }
  }
  long double norm = 0;
  for (double x : v) norm += static_cast<long double>(x) * x;
  norm = std::sqrt(norm);
  for (double& x : v) x = static_cast<double>(x / norm);
  return v;
}

double pass_at_k_by_enumeration(int n, int c, int k) {
  if (n > 20) throw std::invalid_argument("n too large to enumerate");
  // Samples 0..c-1 are the correct ones.
  std::uint64_t total = 0;
  std::uint64_t hit = 0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (__builtin_popcount(mask) != k) continue;
    ++total;
    if ((mask & ((1u << c) - 1u)) != 0) ++hit;
  }
  return static_cast<double>(static_cast<long double>(hit) / static_cast<long double>(total));
}

namespace {

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

bool blank(std::string_view s) { return s.find_first_not_of(" \t\r") == std::string_view::npos; }

std::string def_name(std::string_view line) {
  for (std::string_view kw : {"async def ", "def ", "class "}) {
    if (starts_with(line, kw)) {
      line.remove_prefix(kw.size());
      std::string name;
      for (char ch : line) {
        if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_') {
          name += ch;
        } else {
          break;
        }
      }
      return name;
    }
  }
  return "";
}

}  // namespace

std::vector<Unit> split_units(std::string_view code) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos <= code.size()) {
    auto eol = code.find('\n', pos);
    if (eol == std::string_view::npos) {
      if (pos < code.size()) lines.emplace_back(code.substr(pos));
      break;
    }
    lines.emplace_back(code.substr(pos, eol - pos));
    pos = eol + 1;
  }

  std::vector<Unit> units;
  std::vector<std::string> current;
  std::vector<std::string> decorators;
  std::string name;
  const char* in_string = nullptr;

  auto close = [&] {
    while (!current.empty() && (blank(current.back()) || current.back()[0] == '#')) {
      current.pop_back();
    }
    if (!name.empty()) {
      std::string body;
      for (std::size_t i = 0; i < current.size(); ++i) {
        if (i) body += '\n';
        body += current[i];
      }
      units.push_back({name, body});
    }
    current.clear();
    name.clear();
  };

  for (const auto& line : lines) {
    const bool was_in_string = in_string != nullptr;
    std::size_t i = 0;
    while (i + 3 <= line.size()) {
      std::string_view tri(line.data() + i, 3);
      if (in_string == nullptr && (tri == "\"\"\"" || tri == "'''")) {
        in_string = tri == "\"\"\"" ? "\"\"\"" : "'''";
        i += 3;
      } else if (in_string != nullptr && tri == in_string) {
        in_string = nullptr;
        i += 3;
      } else {
        ++i;
      }
    }
    if (was_in_string || blank(line) || line[0] == ' ' || line[0] == '\t' || line[0] == '#') {
      if (!name.empty()) current.push_back(line);
      continue;
    }
    if (line[0] == '@') {
      if (!name.empty()) close();
      decorators.push_back(line);
      continue;
    }
    close();
    const std::string n = def_name(line);
    if (!n.empty()) {
      name = n;
      current = decorators;
      current.push_back(line);
    }
    decorators.clear();
  }
  close();
  return units;
}

long double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace amrevol::oracle
