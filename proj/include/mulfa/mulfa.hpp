#ifndef MULFA_MULFA_HPP
#define MULFA_MULFA_HPP

#include "mulfa/core.hpp"
#include "mulfa/data.hpp"
#include "mulfa/eval.hpp"
#include "mulfa/generator.hpp"
#include "mulfa/losses.hpp"
#include "mulfa/network.hpp"
#include "mulfa/train.hpp"

#endif  // MULFA_MULFA_HPP
