#include "raci/encoders.hpp"

namespace raci {

void register_encoder(ParamStore& ps, const std::string& prefix, int d_in, int h) {
    ps.add(prefix + ".w1", h, d_in, d_in);
    ps.add(prefix + ".b1", h, 1, d_in);
    ps.add(prefix + ".w2", h, h, h);
    ps.add(prefix + ".b2", h, 1, h);
}

int encode_rows(Tape& t, int x, const std::string& prefix) {
    const int hidden = t.tanh_(t.affine_rows(x, t.param(prefix + ".w1"), t.param(prefix + ".b1")));
    return t.affine_rows(hidden, t.param(prefix + ".w2"), t.param(prefix + ".b2"));
}

}  // namespace raci
