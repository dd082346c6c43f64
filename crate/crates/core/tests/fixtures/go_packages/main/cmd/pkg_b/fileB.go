package pkg_b

// StructB struct
type StructB struct{}

// NewStructB returns a new StructB
func NewStructB() StructB {
	return StructB{}
}

// FunctionB method for StructB
func (b StructB) FunctionB() {}
