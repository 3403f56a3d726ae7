#include "lankgc/decoder.hpp"

#include <cmath>

namespace lankgc {

std::string_view scorer_name(ScorerKind kind) noexcept {
  switch (kind) {
    case ScorerKind::TransE: return "transe";
    case ScorerKind::DistMult: return "distmult";
    case ScorerKind::ComplEx: return "complex";
  }
  return "?";
}

ScorerKind parse_scorer(std::string_view name) {
  if (name == "transe") return ScorerKind::TransE;
  if (name == "distmult") return ScorerKind::DistMult;
  if (name == "complex") return ScorerKind::ComplEx;
  fail(ErrorKind::Config, "scorer must be transe, distmult or complex, got '" + std::string(name) + "'");
}

void check_scorer_dim(ScorerKind kind, std::size_t dim) {
  if (dim == 0) fail(ErrorKind::Config, "embedding dimension must be positive");
  if (kind == ScorerKind::ComplEx && dim % 2 != 0) {
    fail(ErrorKind::Config, "ComplEx needs an even embedding dimension, got " + std::to_string(dim));
  }
}

double score(std::span<const double> s, std::span<const double> q, std::span<const double> o,
             ScorerKind kind) {
  if (s.size() != q.size() || s.size() != o.size()) fail(ErrorKind::Shape, "score: embedding sizes differ");
  const std::size_t d = s.size();
  double total = 0.0;
  switch (kind) {
    case ScorerKind::TransE:
      for (std::size_t k = 0; k < d; ++k) total += std::abs(s[k] + q[k] - o[k]);
      return -total;
    case ScorerKind::DistMult:
      for (std::size_t k = 0; k < d; ++k) total += s[k] * q[k] * o[k];
      return total;
    case ScorerKind::ComplEx: {
      check_scorer_dim(kind, d);
      const std::size_t h = d / 2;
      for (std::size_t k = 0; k < h; ++k) {
        const double sr = s[k], si = s[h + k];
        const double qr = q[k], qi = q[h + k];
        const double orr = o[k], oi = o[h + k];
        total += sr * qr * orr + si * qr * oi + sr * qi * oi - si * qi * orr;
      }
      return total;
    }
  }
  return total;
}

ad::Var score(ad::Tape& tape, ad::Var s, ad::Var q, ad::Var o, ScorerKind kind) {
  switch (kind) {
    case ScorerKind::TransE:
      return tape.scale(tape.l1_norm(tape.sub(tape.add(s, q), o)), -1.0);
    case ScorerKind::DistMult:
      return tape.sum(tape.mul(tape.mul(s, q), o));
    case ScorerKind::ComplEx: {
      const std::size_t d = tape.size(s);
      check_scorer_dim(kind, d);
      const std::size_t h = d / 2;
      const auto sr = tape.slice(s, 0, h), si = tape.slice(s, h, h);
      const auto qr = tape.slice(q, 0, h), qi = tape.slice(q, h, h);
      const auto orr = tape.slice(o, 0, h), oi = tape.slice(o, h, h);
      const ad::Var terms[] = {
          tape.mul(tape.mul(sr, qr), orr),
          tape.mul(tape.mul(si, qr), oi),
          tape.mul(tape.mul(sr, qi), oi),
          tape.scale(tape.mul(tape.mul(si, qi), orr), -1.0),
      };
      return tape.sum(tape.add_n(terms));
    }
  }
  fail(ErrorKind::Config, "unknown scorer");
}

}  // namespace lankgc
