#ifndef MECAL_FIT_IO_HPP
#define MECAL_FIT_IO_HPP

#include "mecal/model.hpp"

#include <iosfwd>

namespace mecal {

/**
 * Key-value fit report, one `key = value` per line, `#` comments allowed.
 *
 * Holds the seven estimates, optional `se.<name>` entries, mu_spread, the
 * sample moments, the alpha3 convention and warnings. Numbers use the
 * shortest round-trip representation, so `read_fit(write_fit(f))` restores
 * every field exactly.
 */
void write_fit(std::ostream& out, const StructuralFit& fit);

/// Throws ParseError on malformed lines or missing keys.
StructuralFit read_fit(std::istream& in);

} // namespace mecal

#endif
