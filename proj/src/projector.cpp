#include "comicreid/projector.hpp"

namespace comicreid {

std::string to_string(Fusion f)
{
    switch (f) {
    case Fusion::Sum:
        return "sum";
    case Fusion::Concat:
        return "concat";
    case Fusion::WeightedSum:
        return "weighted_sum";
    case Fusion::CoeffSum:
        return "coeff_sum";
    }
    return "sum";
}

std::string to_string(Padding p)
{
    return p == Padding::Zero ? "zero" : "trainable";
}

Fusion fusion_from_string(const std::string& s)
{
    for (auto f : {Fusion::Sum, Fusion::Concat, Fusion::WeightedSum, Fusion::CoeffSum})
        if (to_string(f) == s)
            return f;
    throw std::invalid_argument("unknown fusion: " + s);
}

Padding padding_from_string(const std::string& s)
{
    if (s == "zero")
        return Padding::Zero;
    if (s == "trainable")
        return Padding::Trainable;
    throw std::invalid_argument("unknown padding: " + s);
}

} // namespace comicreid
