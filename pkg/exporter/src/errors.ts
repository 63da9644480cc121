/**
 * Typed errors for the exporter and its FFPB reader/writer.
 *
 * Everything thrown on purpose derives from ExporterError so callers can
 * separate expected data problems (bad manifest, unknown layer, malformed
 * bundle bytes) from programming mistakes.
 */

export class ExporterError extends Error {
  constructor(message: string) {
    super(message);
    this.name = new.target.name;
  }
}

/** The manifest references a layer the checkpoint does not contain. */
export class UnknownLayer extends ExporterError {}

/** A checkpoint tensor uses a dtype the exporter cannot emit. */
export class DtypeUnsupported extends ExporterError {}

/** The manifest violates its own schema (duplicate mapping, bad role, ...). */
export class ManifestInvalid extends ExporterError {}

/** Bundle bytes do not start with the FFPB magic. */
export class BadMagic extends ExporterError {}

/** Bundle bytes carry an unsupported container version. */
export class BadVersion extends ExporterError {}

/** Bundle bytes end before a declared field is complete. */
export class TruncatedStream extends ExporterError {}

/** Two tensors in one bundle share a name. */
export class DuplicateTensorName extends ExporterError {}

/** A layer record references a tensor name that is not in the bundle. */
export class UnresolvedReference extends ExporterError {}
