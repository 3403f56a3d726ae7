#pragma once

#include <span>
#include <string_view>

#include "lankgc/autodiff.hpp"

namespace lankgc {

/// Triplet scoring functions, oriented so that higher means more plausible.
///   TransE:   -|s + q - o|_1
///   DistMult: sum_k s_k q_k o_k
///   ComplEx:  Re(sum_k s_k q_k conj(o_k)), first half of each vector real,
///             second half imaginary
enum class ScorerKind { TransE, DistMult, ComplEx };

std::string_view scorer_name(ScorerKind kind) noexcept;
ScorerKind parse_scorer(std::string_view name);

/// Throws Error(Config) when the dimension does not suit the scorer.
void check_scorer_dim(ScorerKind kind, std::size_t dim);

double score(std::span<const double> subject, std::span<const double> relation,
             std::span<const double> object, ScorerKind kind);

ad::Var score(ad::Tape& tape, ad::Var subject, ad::Var relation, ad::Var object, ScorerKind kind);

}  // namespace lankgc
