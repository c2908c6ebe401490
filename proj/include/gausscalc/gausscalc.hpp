#ifndef GAUSSCALC_GAUSSCALC_HPP
#define GAUSSCALC_GAUSSCALC_HPP

#include "gausscalc/error.hpp"
#include "gausscalc/covariance.hpp"
#include "gausscalc/firstchaos.hpp"
#include "gausscalc/tensor.hpp"
#include "gausscalc/chaos.hpp"
#include "gausscalc/qce.hpp"
#include "gausscalc/skorokhod.hpp"
#include "gausscalc/bsde.hpp"
#include "gausscalc/fraccalc.hpp"

#define GAUSSCALC_VERSION "0.1.0"

#endif  // GAUSSCALC_GAUSSCALC_HPP
