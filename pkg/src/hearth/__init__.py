"""Smart-home automation engine with multi-stakeholder rule management.

The package is organized around three feedback layers. A generic layer
interprets abstract rules against a high-level view of the home, a concrete
layer translates the resulting state requests into commands for specific
devices, and a tertiary layer of simulated devices holds set points through
local control loops. Around that core sit a rule-management workflow with
hierarchical conflict resolution, a ticket-based access-control service over
home states, and a learner that mines candidate rules from recorded behavior.
"""

__version__ = "0.1.0"
