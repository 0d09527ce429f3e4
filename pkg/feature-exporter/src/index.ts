export { CONV3_CHANNELS, CONV3_COLS, CONV3_ROWS, FEATURE_DIM, flatIndex, flattenActivation } from './flatten'
export { Box, FeatureRecord, LDDF_VERSION, encodeLddf, readLddf, writeLddf } from './lddf'
export { GrayImage, INPUT_SIZE, loadGrayPng, toInputTensor } from './image'
export { WeightSet, conv3Activations, initWeights, loadWeights, saveWeights } from './model'
export { RegionEntry, ViewListing, exportRegions, exportView, readViewListing } from './export'
