export * from './errors.js';
export * from './ffpb.js';
export * from './manifest.js';
export * from './model.js';
export * from './export.js';
