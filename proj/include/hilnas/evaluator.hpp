#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>

#include "hilnas/candidate.hpp"
#include "hilnas/supergraph.hpp"

namespace hilnas {

struct FinalReport {
    double accuracy = 0.0;
    std::size_t parameter_count = 0;
    int epochs = 0;
};

// Scores candidate masks. Implementations are bound to one template version.
class Evaluator {
public:
    virtual ~Evaluator() = default;

    virtual const TemplateNetwork& network() const = 0;

    // Validation accuracy in [0, 1]; `seed` drives any evaluation-time noise.
    virtual double evaluate(const Mask& mask, std::uint64_t seed) const = 0;

    virtual FinalReport finalize(const Mask& mask, int budget_epochs, std::uint64_t seed) const = 0;

    virtual std::size_t parameter_count(const Mask& mask) const = 0;
};

} // namespace hilnas
