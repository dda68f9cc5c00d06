#include "perfrl/table.hpp"

#include "perfrl/errors.hpp"

#include <cmath>

namespace perfrl {

namespace {
void require_same_shape(const Table& a, const Table& b) {
    if (!a.same_shape(b))
        throw PreconditionError("table shape mismatch");
}
} // namespace

double dot(const Table& a, const Table& b) {
    require_same_shape(a, b);
    double acc = 0.0;
    auto x = a.flat();
    auto y = b.flat();
    for (std::size_t i = 0; i < x.size(); ++i)
        acc += x[i] * y[i];
    return acc;
}

double frobenius_norm(const Table& a) { return std::sqrt(dot(a, a)); }

double distance(const Table& a, const Table& b) {
    require_same_shape(a, b);
    double acc = 0.0;
    auto x = a.flat();
    auto y = b.flat();
    for (std::size_t i = 0; i < x.size(); ++i)
        acc += (x[i] - y[i]) * (x[i] - y[i]);
    return std::sqrt(acc);
}

Table axpy(const Table& a, double scale, const Table& b) {
    require_same_shape(a, b);
    Table out = a;
    auto o = out.flat();
    auto y = b.flat();
    for (std::size_t i = 0; i < o.size(); ++i)
        o[i] += scale * y[i];
    return out;
}

} // namespace perfrl
