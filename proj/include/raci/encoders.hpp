#pragma once

#include <string>

#include "raci/tape.hpp"

namespace raci {

// Per-scale feature encoders: each is rows -> h via two affine layers with a
// tanh between them, y = W2 tanh(W1 x + b1) + b2. Parameters are registered
// under <prefix>.{w1,b1,w2,b2}.
void register_encoder(ParamStore& ps, const std::string& prefix, int d_in, int h);

// Applies the encoder row-wise to an n x d_in node; returns an n x h node.
int encode_rows(Tape& t, int x, const std::string& prefix);

}  // namespace raci
