#pragma once

#include <gprloc/app/config.hpp>
#include <gprloc/app/dataset.hpp>
#include <gprloc/app/model_io.hpp>
#include <gprloc/app/pipeline.hpp>
#include <gprloc/app/plot.hpp>
#include <gprloc/app/train.hpp>
