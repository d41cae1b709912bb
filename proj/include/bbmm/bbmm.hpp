#pragma once

#include "bbmm/bessel.hpp"
#include "bbmm/dense.hpp"
#include "bbmm/errors.hpp"
#include "bbmm/experiments.hpp"
#include "bbmm/gp.hpp"
#include "bbmm/inference.hpp"
#include "bbmm/interpolation.hpp"
#include "bbmm/io.hpp"
#include "bbmm/kernels.hpp"
#include "bbmm/mbcg.hpp"
#include "bbmm/operators.hpp"
#include "bbmm/precond.hpp"
#include "bbmm/toeplitz.hpp"
#include "bbmm/tridiag_eig.hpp"
